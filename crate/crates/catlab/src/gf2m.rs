//! Binary finite fields GF(2^m) for m = 1..=16.
//!
//! Field elements are m-bit integers (polynomial coefficient vectors over
//! GF(2), bit k = coefficient of x^k). Multiplication is carry-less
//! polynomial multiplication reduced by a fixed, published irreducible
//! polynomial per width — the table below is part of the external format
//! (hash encodings are only portable against these exact moduli), and a
//! test verifies each entry programmatically with a standard irreducibility
//! check rather than trusting transcription.

/// Largest supported field width.
pub const MAX_M: u32 = 16;

/// Published irreducible modulus per width, index = m. Low-weight standard
/// polynomials (trinomials where they exist, pentanomials otherwise);
/// bit m is the leading x^m term.
const IRREDUCIBLE: [u32; 17] = [
    0,       // m=0: unused
    0x3,     // x + 1
    0x7,     // x^2 + x + 1
    0xB,     // x^3 + x + 1
    0x13,    // x^4 + x + 1
    0x25,    // x^5 + x^2 + 1
    0x43,    // x^6 + x + 1
    0x83,    // x^7 + x + 1
    0x11B,   // x^8 + x^4 + x^3 + x + 1
    0x203,   // x^9 + x + 1
    0x409,   // x^10 + x^3 + 1
    0x805,   // x^11 + x^2 + 1
    0x1009,  // x^12 + x^3 + 1
    0x201B,  // x^13 + x^4 + x^3 + x + 1
    0x4021,  // x^14 + x^5 + 1
    0x8003,  // x^15 + x + 1
    0x1002B, // x^16 + x^5 + x^3 + x + 1
];

/// The modulus polynomial for GF(2^m).
pub fn modulus(m: u32) -> u32 {
    assert!((1..=MAX_M).contains(&m), "field width {m} outside 1..={MAX_M}");
    IRREDUCIBLE[m as usize]
}

/// Field addition (= subtraction): coefficient-wise XOR.
pub fn gf_add(a: u32, b: u32) -> u32 {
    a ^ b
}

/// Carry-less product of two polynomials of degree < 32.
pub fn clmul(a: u32, b: u32) -> u64 {
    let mut acc: u64 = 0;
    let mut a = a as u64;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    acc
}

/// Reduce a polynomial modulo the published modulus for width m.
pub fn reduce(m: u32, mut x: u64) -> u32 {
    let p = modulus(m) as u64;
    let mut bit = 63 - x.leading_zeros().min(63);
    while x >> m != 0 {
        if x >> bit & 1 == 1 {
            x ^= p << (bit - m);
        }
        bit -= 1;
    }
    x as u32
}

/// Field multiplication in GF(2^m).
pub fn gf_mul(m: u32, a: u32, b: u32) -> u32 {
    debug_assert!(a >> m == 0 && b >> m == 0, "operands wider than the field");
    reduce(m, clmul(a, b))
}

/// Field exponentiation by squaring.
pub fn gf_pow(m: u32, mut base: u32, mut e: u64) -> u32 {
    let mut acc = 1u32;
    while e > 0 {
        if e & 1 == 1 {
            acc = gf_mul(m, acc, base);
        }
        base = gf_mul(m, base, base);
        e >>= 1;
    }
    acc
}

/// Multiplicative inverse of a nonzero element (a^{2^m − 2}).
pub fn gf_inv(m: u32, a: u32) -> u32 {
    assert!(a != 0, "zero has no inverse");
    gf_pow(m, a, (1u64 << m) - 2)
}

// ── generic polynomial arithmetic over GF(2) (for the irreducibility test) ──

fn poly_deg(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

fn poly_rem(mut a: u128, b: u64) -> u64 {
    let db = poly_deg(b);
    assert!(db >= 0, "division by zero polynomial");
    loop {
        let da = 127 - a.leading_zeros() as i32;
        if a == 0 || da < db {
            return a as u64;
        }
        a ^= (b as u128) << (da - db);
    }
}

fn poly_mulmod(a: u64, b: u64, p: u64) -> u64 {
    let mut acc: u128 = 0;
    let mut a = a as u128;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    poly_rem(acc, p)
}

fn poly_gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = poly_rem(a as u128, b);
        a = b;
        b = r;
    }
    a
}

/// Repeated Frobenius: x^{2^k} mod p starting from x.
fn frobenius_iterate(k: u32, p: u64) -> u64 {
    let mut t: u64 = 0b10; // the polynomial x
    for _ in 0..k {
        t = poly_mulmod(t, t, p);
    }
    t
}

/// Standard irreducibility test over GF(2): p of degree d is irreducible iff
/// x^{2^d} ≡ x (mod p) and gcd(x^{2^{d/q}} − x, p) = 1 for every prime q | d.
pub fn is_irreducible(p: u64) -> bool {
    let d = poly_deg(p);
    if d < 1 {
        return false;
    }
    if d == 1 {
        return true; // x and x+1
    }
    if frobenius_iterate(d as u32, p) != 0b10 {
        return false;
    }
    let mut rem = d as u32;
    let mut primes = Vec::new();
    let mut q = 2;
    while q * q <= rem {
        if rem % q == 0 {
            primes.push(q);
            while rem % q == 0 {
                rem /= q;
            }
        }
        q += 1;
    }
    if rem > 1 {
        primes.push(rem);
    }
    for q in primes {
        let t = frobenius_iterate(d as u32 / q, p);
        if poly_gcd(t ^ 0b10, p) != 1 {
            return false;
        }
    }
    true
}
