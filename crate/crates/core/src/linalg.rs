//! Exact rank of integer matrices.
//!
//! [`rank_exact`] reduces modulo a few 31-bit primes, which gives a lower
//! bound on the rational rank, then reconstructs a rational kernel basis by
//! CRT and rational reconstruction and verifies it over `Z`, which gives the
//! matching upper bound. When certification fails it falls back to
//! fraction-free (Bareiss) elimination over big integers.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Dense row-major integer matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|row| {
            assert_eq!(row.len(), c, "ragged rows");
            row.iter().copied()
        });
        Self { rows: r, cols: c, data: data.collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: i64) -> Option<()> {
        let slot = &mut self.data[r * self.cols + c];
        *slot = slot.checked_add(v)?;
        Some(())
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    fn row_nonzeros(&self) -> Vec<Vec<(usize, i64)>> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .filter_map(|c| {
                        let v = self.get(r, c);
                        (v != 0).then_some((c, v))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Exact rank over `Q`.
pub fn rank_exact(a: &IntMatrix) -> usize {
    if a.rows == 0 || a.cols == 0 {
        return 0;
    }
    modular_certified_rank(a, 8).unwrap_or_else(|| rank_bareiss(a))
}

/// Fraction-free Gaussian elimination (Bareiss) over big integers.
pub fn rank_bareiss(a: &IntMatrix) -> usize {
    let mut m: Vec<Vec<BigInt>> = (0..a.rows)
        .map(|r| (0..a.cols).map(|c| BigInt::from(a.get(r, c))).collect())
        .collect();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..a.cols {
        if rank == a.rows {
            break;
        }
        let Some(piv) = (rank..a.rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        let (top, rest) = m.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut() {
            for c in col + 1..a.cols {
                let v = &pivot_row[col] * &row[c] - &row[col] * &pivot_row[c];
                row[c] = v / &prev;
            }
            row[col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Rank modulo a prime `p < 2³¹`.
pub fn rank_mod_p(a: &IntMatrix, p: u64) -> usize {
    rref_mod(a, p).0.len()
}

fn reduce(v: i64, p: u64) -> u64 {
    v.rem_euclid(p as i64) as u64
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

/// Reduced row echelon form mod `p`: pivot columns and the reduced rows.
fn rref_mod(a: &IntMatrix, p: u64) -> (Vec<usize>, Vec<Vec<u64>>) {
    let mut m: Vec<Vec<u64>> = (0..a.rows).map(|r| (0..a.cols).map(|c| reduce(a.get(r, c), p)).collect()).collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..a.cols {
        if rank == a.rows {
            break;
        }
        let Some(piv) = (rank..a.rows).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, piv);
        let inv = pow_mod(m[rank][col], p - 2, p);
        for x in m[rank][col..].iter_mut() {
            *x = *x * inv % p;
        }
        let pivot_row = std::mem::take(&mut m[rank]);
        for (r, row) in m.iter_mut().enumerate() {
            if r == rank {
                continue;
            }
            let f = row[col];
            if f == 0 {
                continue;
            }
            for (x, &y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                if y != 0 {
                    *x = (*x + p - f * y % p) % p;
                }
            }
        }
        m[rank] = pivot_row;
        pivots.push(col);
        rank += 1;
    }
    m.truncate(rank);
    (pivots, m)
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    // deterministic for n < 3 215 031 751
    'witness: for a in [2u64, 3, 5, 7] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = x * x % n;
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn primes_below_2_31(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = (1u64 << 31) - 1;
    while out.len() < count {
        if is_prime(n) {
            out.push(n);
        }
        n -= 2;
    }
    out
}

/// `a/b ≡ x (mod m)` with `|a|, b ≤ √(m/2)`.
fn rational_reconstruct(x: &BigInt, m: &BigInt) -> Option<(BigInt, BigInt)> {
    let bound = (m / 2u32).sqrt();
    let (mut r0, mut r1) = (m.clone(), x.mod_floor(m));
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while r1 > bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        r0 = std::mem::replace(&mut r1, r2);
        t0 = std::mem::replace(&mut t1, t2);
    }
    if t1.is_zero() || t1.abs() > bound {
        return None;
    }
    if t1.is_negative() {
        Some((-r1, -t1))
    } else {
        Some((r1, t1))
    }
}

fn modular_certified_rank(a: &IntMatrix, max_primes: usize) -> Option<usize> {
    let primes = primes_below_2_31(max_primes);
    let nonzeros = a.row_nonzeros();
    let mut best: Option<(Vec<usize>, Vec<Vec<BigInt>>, BigInt)> = None;
    for &p in &primes {
        let (pivots, rows) = rref_mod(a, p);
        let free: Vec<usize> = (0..a.cols).filter(|c| !pivots.contains(c)).collect();
        if free.is_empty() {
            // full column rank mod p already forces full column rank over Q
            return Some(pivots.len());
        }
        // only the entries that enter the kernel basis are kept
        let residues: Vec<Vec<BigInt>> =
            rows.iter().map(|row| free.iter().map(|&f| BigInt::from(row[f])).collect()).collect();
        let modulus = BigInt::from(p);
        best = match best.take() {
            None => Some((pivots, residues, modulus)),
            Some((bp, br, bm)) => {
                if pivots.len() > bp.len() || (pivots.len() == bp.len() && pivots < bp) {
                    Some((pivots, residues, modulus))
                } else if pivots == bp {
                    let combined = br
                        .iter()
                        .zip(&residues)
                        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| crt(x, &bm, y, &modulus)).collect())
                        .collect();
                    Some((bp, combined, &bm * &modulus))
                } else {
                    Some((bp, br, bm))
                }
            }
        };
        let (pivots, residues, modulus) = best.as_ref().unwrap();
        if verify_kernel(a, &nonzeros, pivots, residues, modulus) {
            return Some(pivots.len());
        }
    }
    None
}

fn crt(x: &BigInt, m: &BigInt, y: &BigInt, n: &BigInt) -> BigInt {
    // x + m·((y − x)·m⁻¹ mod n)
    let ext = m.extended_gcd(n);
    let inv = ext.x.mod_floor(n);
    let t = ((y - x) * inv).mod_floor(n);
    x + m * t
}

fn verify_kernel(
    a: &IntMatrix,
    nonzeros: &[Vec<(usize, i64)>],
    pivots: &[usize],
    residues: &[Vec<BigInt>],
    modulus: &BigInt,
) -> bool {
    let free: Vec<usize> = (0..a.cols).filter(|c| !pivots.contains(c)).collect();
    for (k, &f) in free.iter().enumerate() {
        // v_f = 1, v_{pivot_i} = −R[i][f]
        let mut fracs = Vec::with_capacity(pivots.len());
        for row in residues {
            let neg = (modulus - &row[k]).mod_floor(modulus);
            match rational_reconstruct(&neg, modulus) {
                Some(q) => fracs.push(q),
                None => return false,
            }
        }
        let lcm = fracs.iter().fold(BigInt::one(), |acc, (_, d)| acc.lcm(d));
        let mut v = vec![BigInt::zero(); a.cols];
        v[f] = lcm.clone();
        for (&pc, (n, d)) in pivots.iter().zip(&fracs) {
            v[pc] = n * (&lcm / d);
        }
        let small: Option<Vec<i64>> = v.iter().map(|x| x.to_i64().filter(|y| y.abs() < 1 << 40)).collect();
        let ok = match small {
            Some(sv) => nonzeros.iter().all(|row| {
                let s: i128 = row.iter().map(|&(c, x)| x as i128 * sv[c] as i128).sum();
                s == 0
            }),
            None => nonzeros.iter().all(|row| {
                let s: BigInt = row.iter().map(|&(c, x)| &v[c] * x).sum();
                s.is_zero()
            }),
        };
        if !ok {
            return false;
        }
    }
    true
}
