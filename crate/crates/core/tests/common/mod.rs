//! Enumeration oracle, written against the raw problem data only.

#![allow(dead_code)]

use pbsearch_core::{Bits, Problem, SecondCriterion};

/// Optimum of a linear-objective problem by visiting all `2^D` vectors.
pub struct Optimum {
    pub value: f64,
    pub x: Vec<bool>,
    pub feasible_count: u64,
}

pub fn brute_force(p: &Problem) -> Option<Optimum> {
    assert!(matches!(p.criterion(), SecondCriterion::Identity));
    let d = p.dim();
    assert!(d <= 24, "enumeration of 2^{d} vectors");
    let a = p.linear_coeffs();
    let rows: Vec<(&[f64], f64)> = p.constraints().iter().map(|c| (c.row.as_slice(), c.bound)).collect();
    let groups: Vec<(usize, usize)> = p.groups().iter().map(|g| (g.start, g.len)).collect();
    let mut best: Option<(f64, u64)> = None;
    let mut feasible_count = 0;
    'mask: for mask in 0u64..1 << d {
        let on = |i: usize| mask >> i & 1 == 1;
        for &(row, bound) in &rows {
            let lhs: f64 = (0..d).filter(|&i| on(i)).map(|i| row[i]).sum();
            if lhs > bound {
                continue 'mask;
            }
        }
        for &(start, len) in &groups {
            if (start..start + len).filter(|&i| on(i)).count() > 1 {
                continue 'mask;
            }
        }
        feasible_count += 1;
        let value: f64 = (0..d).filter(|&i| on(i)).map(|i| a[i]).sum();
        if best.map_or(true, |(v, _)| value > v) {
            best = Some((value, mask));
        }
    }
    best.map(|(value, mask)| Optimum {
        value,
        x: (0..d).map(|i| mask >> i & 1 == 1).collect(),
        feasible_count,
    })
}

pub fn bits(x: &[bool]) -> Bits {
    Bits::from_bools(x.iter().copied())
}

/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
