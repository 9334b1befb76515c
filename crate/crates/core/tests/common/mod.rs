#![allow(dead_code)]
//! Reference expansions and helpers shared by the integration tests.

use hexpepo_core::pauli::{PauliString, PauliSum, PauliTerm};

pub fn term(coeff: f64, spec: &str) -> PauliTerm {
    let string = if spec == "I" {
        PauliString::identity()
    } else {
        PauliString::parse_spec(spec).unwrap()
    };
    PauliTerm { string, coeff, order: 0 }
}

pub fn sum(terms: Vec<PauliTerm>) -> PauliSum {
    PauliSum::from_terms(terms)
}

/// Product of sums whose terms act on disjoint sites.
pub fn product(factors: &[PauliSum]) -> PauliSum {
    let mut acc = sum(vec![term(1.0, "I")]);
    for f in factors {
        let mut next = Vec::new();
        for a in acc.terms() {
            for b in f.terms() {
                let ops = a.string.ops().into_iter().chain(b.string.ops());
                let string = PauliString::from_ops(ops).expect("factors must be disjoint");
                next.push(PauliTerm { string, coeff: a.coeff * b.coeff, order: 0 });
            }
        }
        acc = sum(next);
    }
    acc
}

pub fn add(a: &PauliSum, b: &PauliSum, sign: f64) -> PauliSum {
    let mut terms = a.terms();
    terms.extend(b.terms().into_iter().map(|t| PauliTerm { coeff: sign * t.coeff, ..t }));
    sum(terms)
}

/// Largest coefficient difference over the union of strings.
pub fn max_coeff_diff(a: &PauliSum, b: &PauliSum) -> f64 {
    add(a, b, -1.0)
        .terms()
        .iter()
        .map(|t| t.coeff.abs())
        .chain(std::iter::once(0.0))
        .fold(0.0, f64::max)
}

pub fn same_strings(a: &PauliSum, b: &PauliSum) -> bool {
    let sa: Vec<_> = a.terms().iter().map(|t| t.string).collect();
    let sb: Vec<_> = b.terms().iter().map(|t| t.string).collect();
    sa == sb
}

/// W10 after conjugation by `[R_ZZ, R_X, R_ZZ]`.
pub fn w10_bracket(theta: f64) -> PauliSum {
    let (s, c) = theta.sin_cos();
    product(&[
        sum(vec![term(1.0, "Z17")]),
        sum(vec![term(c, "X13;Z12"), term(s, "Z13")]),
        sum(vec![
            term(c * c, "Y9;Z8"),
            term(c * s, "Z9,10"),
            term(-s * s, "Y10;Z11"),
            term(-c * s, "X9,10;Z8,11"),
        ]),
        sum(vec![
            term(c * c, "X29,31;Y30;Z28,32"),
            term(-c * s, "X29,30;Z28"),
            term(-c * s, "X30,31;Z32"),
            term(-s * s, "Y30"),
        ]),
    ])
}

/// W17 after one `R_ZZ` layer.
pub fn w17_after_rzz() -> PauliSum {
    sum(vec![term(-1.0, "X52,56,57,58;Y37,41,62,75,79;Z53,59,61,71,76,78")])
}

/// W̃17 after conjugation by `[R_X, R_ZZ]`.
pub fn w17tilde_bracket(theta: f64) -> PauliSum {
    let (s, c) = theta.sin_cos();
    let (s2, c2, s3, c3) = (s * s, c * c, s * s * s, c * c * c);
    let left = product(&[
        sum(vec![term(-1.0, "X52,56,57,58;Z53,59,61,71")]),
        sum(vec![
            term(s3, "Y37,41"),
            term(c * s2, "X37,38;Y41;Z39"),
            term(c * s2, "X40,41;Y37;Z39"),
            term(c * s2, "X41,42;Y37;Z43"),
            term(c2 * s, "X37,38,40,41"),
            term(c2 * s, "X37,38,41,42;Z39,43"),
            term(-c2 * s, "X40,42;Y37,41;Z39,43"),
            term(-c3, "X37,38,40,42;Y41;Z43"),
        ]),
        sum(vec![
            term(s2, "Y75;Z76"),
            term(-c * s, "Z75,90"),
            term(c * s, "X75,90;Z76,94"),
            term(-c2, "Y90;Z94"),
        ]),
    ]);
    let first = product(&[
        sum(vec![term(s2, "Y62"), term(c * s, "X62,63;Z64")]),
        sum(vec![
            term(s2, "Y79;Z78"),
            term(c * s, "X79,80;Z78,81"),
            term(c * s, "X79,91;Z78,98"),
            term(-c2, "X80,91;Y79;Z78,81,98"),
        ]),
    ]);
    let second = product(&[
        sum(vec![term(c2, "X63,72;Y62;Z64"), term(-c * s, "X62,72")]),
        sum(vec![
            term(s2, "Y79;Z78,81"),
            term(c * s, "X79,80;Z78"),
            term(c * s, "X79,91;Z78,81,98"),
            term(-c2, "X80,91;Y79;Z78,98"),
        ]),
    ]);
    product(&[left, add(&first, &second, -1.0)])
}

/// Z62 after conjugation by `[R_ZZ, R_X] x 3, R_ZZ` — the four-step operator
/// before its outermost `R_X` layer; its expectation in `R_X(θ)|0…0⟩` is the
/// four-step value of `⟨Z62⟩`.
pub fn z62_four_step_operator(theta: f64) -> PauliSum {
    let (s, c) = theta.sin_cos();
    let p = |k: i32| s.powi(k);
    let q = |k: i32| c.powi(k);
    let mut t = vec![
        term(q(3) * (1.0 + p(2)), "Z62"),
        term(-q(4) * p(1), "Y62"),
        term(-q(3) * p(4), "X62;Y61,63,72"),
        term(q(2) * p(3), "X62;Z61,63,72"),
        term(-q(1) * p(4), "X61,62,63,72;Z60,64,81"),
        // the only order-7 string
        term(p(7), "X61,62,63,72;Y60,64,81;Z53,54,59,65,80,82"),
    ];
    for spec in [
        "Y60,61,63,64;Z53,54,59,62,65",
        "Y60,61,72,81;Z53,59,62,80,82",
        "Y63,64,72,81;Z54,62,65,80,82",
        "X61,62,63;Y60,64,72;Z53,54,59,65",
        "X61,62,72;Y60,63,81;Z53,59,80,82",
        "X62,63,72;Y61,64,81;Z54,65,80,82",
    ] {
        t.push(term(-q(1) * p(6), spec));
    }
    for spec in [
        "X61,63;Y62;Z60,64",
        "X63,72;Y62;Z64,81",
        "X61,72;Y62;Z60,81",
        "X61,62;Y60;Z53,59,63,72",
        "X62,63;Y64;Z54,61,65,72",
        "X62,72;Y81;Z61,63,80,82",
    ] {
        t.push(term(q(2) * p(3), spec));
    }
    for (sign, spec) in [
        (1.0, "X61,62;Y60,63,72;Z53,59"),
        (1.0, "X62,63;Y61,64,72;Z54,65"),
        (1.0, "X62,72;Y61,63,81;Z80,82"),
        (-1.0, "X63;Y60,61;Z53,59,62"),
        (-1.0, "X72;Y60,61;Z53,59,62"),
        (-1.0, "X61;Y63,64;Z54,62,65"),
        (-1.0, "X72;Y63,64;Z54,62,65"),
        (-1.0, "X61;Y72,81;Z62,80,82"),
        (-1.0, "X63;Y72,81;Z62,80,82"),
        (-1.0, "X61,62,63;Y60,64;Z53,54,59,65,72"),
        (-1.0, "X61,62,72;Y60,81;Z53,59,63,80,82"),
        (-1.0, "X62,63,72;Y64,81;Z54,61,65,80,82"),
    ] {
        t.push(term(sign * q(2) * p(5), spec));
    }
    for (sign, spec) in [
        (1.0, "X61,62;Z60"),
        (1.0, "X62,63;Z64"),
        (1.0, "X62,72;Z81"),
        (-1.0, "X62;Y72;Z61,63"),
        (-1.0, "X62;Y63;Z61,72"),
        (-1.0, "X62;Y61;Z63,72"),
    ] {
        t.push(term(sign * q(3) * p(2), spec));
    }
    for (sign, spec) in [
        (-1.0, "X61,63;Z62"),
        (-1.0, "X61,72;Z62"),
        (-1.0, "X63,72;Z62"),
        (1.0, "X62,63;Y61,64;Z54,65,72"),
        (1.0, "X62,63;Y64,72;Z54,61,65"),
        (1.0, "X61,62;Y60,63;Z53,59,72"),
        (1.0, "X61,62;Y60,72;Z53,59,63"),
        (1.0, "X62,72;Y61,81;Z63,80,82"),
        (1.0, "X62,72;Y63,81;Z61,80,82"),
    ] {
        t.push(term(sign * q(3) * p(4), spec));
    }
    for spec in ["X62;Y63,72;Z61", "X62;Y61,63;Z72", "X62;Y61,72;Z63"] {
        t.push(term(-q(4) * p(3), spec));
    }
    sum(t)
}

/// `n` points of `[0, π/2]`, endpoints included.
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64)
        .collect()
}
