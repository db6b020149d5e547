//! Arithmetic modulo the Mersenne prime 2^61 - 1, used to fingerprint
//! formulas at a few fixed pseudo-random points.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::monomial::ParamId;

pub const MODULUS: u64 = (1 << 61) - 1;

/// Number of evaluation points in a fingerprint.
pub const POINTS: usize = 2;

/// Value at each point; `None` where a denominator vanished mod p.
pub type Fingerprint = [Option<u64>; POINTS];

pub fn add(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

pub fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + MODULUS - b
    }
}

pub fn mul(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    let lo = (p as u64) & MODULUS;
    let hi = (p >> 61) as u64;
    add(lo, hi)
}

pub fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

pub fn inv(a: u64) -> Option<u64> {
    (a != 0).then(|| pow(a, MODULUS - 2))
}

pub fn from_bigint(x: &BigInt) -> u64 {
    x.mod_floor(&BigInt::from(MODULUS)).to_u64().expect("reduced below modulus")
}

pub fn from_rational(x: &BigRational) -> Option<u64> {
    Some(mul(from_bigint(x.numer()), inv(from_bigint(x.denom()))?))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Coordinate of parameter `id` at point `k`; fixed for the whole process.
pub fn coordinate(k: usize, id: ParamId) -> u64 {
    let v = splitmix(((k as u64) << 32) ^ id.0 as u64 ^ 0x5eed_0000_0000_0000) % MODULUS;
    v.max(2)
}

pub fn constant(x: &BigRational) -> Fingerprint {
    let v = from_rational(x);
    [v; POINTS]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_ops() {
        let a = MODULUS - 3;
        assert_eq!(add(a, 5), 2);
        assert_eq!(sub(2, 5), MODULUS - 3);
        assert_eq!(mul(a, inv(a).unwrap()), 1);
        assert_eq!(from_bigint(&BigInt::from(-1)), MODULUS - 1);
        assert_eq!(inv(0), None);
    }
}
