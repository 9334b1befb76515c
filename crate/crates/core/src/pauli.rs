//! Sparse Pauli-string algebra and Heisenberg back-propagation.
//!
//! A [`PauliSum`] maps each Pauli string to a real coefficient and a
//! perturbative order (the number of sine branches taken). `R_ZZ` is Clifford
//! and maps each string to one signed string; `R_X(θ)` splits every string
//! on each site carrying `Y` or `Z`.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, Layer};
use crate::error::{Error, Result};
use crate::gates::{rx_superop, rzz_rules, Pauli};
use crate::lattice::Lattice;

/// Strings are stored as two 128-bit masks, which bounds the lattice size.
pub const MAX_SITES: usize = 128;

/// Coefficients smaller than this after merging are rounding noise.
pub const MERGE_DROP: f64 = 1e-15;

/// Default hard cap on live terms.
pub const DEFAULT_TERM_CAP: usize = 10_000_000;

/// Phase-free Pauli string in symplectic form: site `i` carries
/// `X^{x_i} Z^{z_i}` up to phase, i.e. `(1,0)=X`, `(1,1)=Y`, `(0,1)=Z`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PauliString {
    x: u128,
    z: u128,
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(site: usize, p: Pauli) -> Result<Self> {
        let mut s = Self::identity();
        s.try_set(site, p)?;
        Ok(s)
    }

    /// Builds a string from `(site, letter)` pairs; each site at most once.
    pub fn from_ops(ops: impl IntoIterator<Item = (usize, Pauli)>) -> Result<Self> {
        let mut s = Self::identity();
        for (site, p) in ops {
            if site < MAX_SITES && s.get(site) != Pauli::I {
                return Err(Error::Observable(format!("site {site} given twice")));
            }
            s.try_set(site, p)?;
        }
        Ok(s)
    }

    fn try_set(&mut self, site: usize, p: Pauli) -> Result<()> {
        if site >= MAX_SITES {
            return Err(Error::Observable(format!(
                "site {site} exceeds the {MAX_SITES}-site limit"
            )));
        }
        self.set(site, p);
        Ok(())
    }

    /// Letter on `site`; panics if `site >= MAX_SITES`.
    #[inline]
    pub fn get(&self, site: usize) -> Pauli {
        let bit = 1u128 << site;
        Pauli::from_bits(self.x & bit != 0, self.z & bit != 0)
    }

    #[inline]
    pub fn set(&mut self, site: usize, p: Pauli) {
        let bit = 1u128 << site;
        let (x, z) = p.bits();
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
    }

    /// Sites carrying `X` or `Y`.
    pub fn x_mask(&self) -> u128 {
        self.x
    }

    /// Sites carrying `Z` or `Y`.
    pub fn z_mask(&self) -> u128 {
        self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when only `I` and `Z` occur, i.e. the string is diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.x == 0
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    /// Sites carrying a non-identity letter, increasing.
    pub fn support(&self) -> Vec<usize> {
        bits(self.x | self.z).collect()
    }

    pub fn ops(&self) -> Vec<(usize, Pauli)> {
        bits(self.x | self.z).map(|s| (s, self.get(s))).collect()
    }

    pub fn max_site(&self) -> Option<usize> {
        let m = self.x | self.z;
        (m != 0).then(|| 127 - m.leading_zeros() as usize)
    }

    /// Parses `"X13,29,31;Y9,30;Z8,12"`: one block per letter, sites
    /// separated by commas, blocks separated by semicolons.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let bad = |why: &str| Error::Observable(format!("`{spec}`: {why}"));
        let mut ops = Vec::new();
        for block in spec.split(';').map(str::trim).filter(|b| !b.is_empty()) {
            let mut chars = block.chars();
            let letter = chars
                .next()
                .and_then(Pauli::from_char)
                .filter(|&p| p != Pauli::I)
                .ok_or_else(|| bad("each block starts with X, Y or Z"))?;
            for site in chars.as_str().split(',') {
                let site: usize = site.trim().parse().map_err(|_| bad("sites are integers"))?;
                ops.push((site, letter));
            }
        }
        if ops.is_empty() {
            return Err(bad("empty observable"));
        }
        Self::from_ops(ops)
    }

    /// Parses the dump form `"X13 Y9 Z8"` (empty or `"I"` for identity).
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for tok in text.split_whitespace() {
            if tok == "I" {
                continue;
            }
            let mut chars = tok.chars();
            let letter = chars
                .next()
                .and_then(Pauli::from_char)
                .ok_or_else(|| Error::Observable(format!("bad token `{tok}`")))?;
            let site: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::Observable(format!("bad token `{tok}`")))?;
            ops.push((site, letter));
        }
        Self::from_ops(ops)
    }

    /// Block form, e.g. `X13,29,31;Y9,30;Z8,12`.
    pub fn to_spec(&self) -> String {
        let mut blocks = Vec::new();
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            let sites: Vec<String> = self
                .ops()
                .into_iter()
                .filter(|&(_, q)| q == p)
                .map(|(s, _)| s.to_string())
                .collect();
            if !sites.is_empty() {
                blocks.push(format!("{p}{}", sites.join(",")));
            }
        }
        blocks.join(";")
    }
}

/// `"X13 X29 Y9 Z8"`: letters grouped X, Y, Z, sites increasing; `"I"` for
/// the identity.
impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "I");
        }
        let mut first = true;
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            for (s, q) in self.ops() {
                if q == p {
                    if !first {
                        write!(f, " ")?;
                    }
                    write!(f, "{p}{s}")?;
                    first = false;
                }
            }
        }
        Ok(())
    }
}

fn bits(mut m: u128) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (m != 0).then(|| {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            i
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliTerm {
    pub string: PauliString,
    pub coeff: f64,
    pub order: u32,
}

/// Truncation applied after every layer of back-propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    None,
    /// Drop terms whose order exceeds `K`.
    MaxOrder(u32),
    /// Drop terms with `|coeff| < ε`.
    CoeffThreshold(f64),
    /// Keep the `M` largest terms by `|coeff|`, ties by string order.
    MaxTerms(usize),
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TruncationPolicy::CoeffThreshold(e) if e.is_nan() || e < 0.0 || e.is_infinite() => Err(
                Error::InvalidArgument(format!("coefficient threshold must be >= 0, got {e}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            TruncationPolicy::None => "exact".into(),
            TruncationPolicy::MaxOrder(k) => format!("order<={k}"),
            TruncationPolicy::CoeffThreshold(e) => format!("coeff>={e}"),
            TruncationPolicy::MaxTerms(m) => format!("terms<={m}"),
        }
    }
}

/// Sum of Pauli strings with merged, real coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PauliSum {
    terms: FxHashMap<PauliString, (f64, u32)>,
}

impl PauliSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_string(s: PauliString) -> Self {
        let mut sum = Self::new();
        sum.add(s, 1.0, 0);
        sum
    }

    /// Merges the given terms and drops rounding-noise coefficients.
    pub fn from_terms(terms: impl IntoIterator<Item = PauliTerm>) -> Self {
        let mut sum = Self::new();
        for t in terms {
            sum.add(t.string, t.coeff, t.order);
        }
        sum.prune();
        sum
    }

    /// Adds one term; on a collision coefficients add and the order becomes
    /// the smaller of the two.
    pub fn add(&mut self, string: PauliString, coeff: f64, order: u32) {
        let e = self.terms.entry(string).or_insert((0.0, order));
        e.0 += coeff;
        e.1 = e.1.min(order);
    }

    fn prune(&mut self) {
        self.terms.retain(|_, (c, _)| c.abs() >= MERGE_DROP);
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, s: &PauliString) -> Option<(f64, u32)> {
        self.terms.get(s).copied()
    }

    pub fn coeff(&self, s: &PauliString) -> f64 {
        self.terms.get(s).map_or(0.0, |t| t.0)
    }

    /// Terms in canonical string order.
    pub fn terms(&self) -> Vec<PauliTerm> {
        let mut v: Vec<PauliTerm> = self
            .terms
            .iter()
            .map(|(&string, &(coeff, order))| PauliTerm {
                string,
                coeff,
                order,
            })
            .collect();
        v.sort_unstable_by_key(|t| t.string);
        v
    }

    /// The only term of a single-string sum.
    pub fn single_term(&self) -> Option<PauliTerm> {
        (self.len() == 1).then(|| self.terms()[0])
    }

    /// Σ coeff², the squared Frobenius norm in the normalized Pauli basis.
    pub fn norm_sq(&self) -> f64 {
        self.terms().iter().map(|t| t.coeff * t.coeff).sum()
    }

    pub fn max_site(&self) -> Option<usize> {
        self.terms.keys().filter_map(PauliString::max_site).max()
    }

    pub fn max_order(&self) -> u32 {
        self.terms.values().map(|t| t.1).max().unwrap_or(0)
    }

    /// Sites touched by any term, increasing.
    pub fn support(&self) -> Vec<usize> {
        let m = self.terms.keys().fold(0u128, |m, s| m | s.x | s.z);
        bits(m).collect()
    }

    /// Renames sites; `f` returns `None` for sites that have no image.
    pub fn relabel(&self, f: impl Fn(usize) -> Option<usize>) -> Result<PauliSum> {
        let mut out = PauliSum::new();
        for t in self.terms() {
            let mut ops = Vec::new();
            for (s, p) in t.string.ops() {
                let to = f(s).ok_or_else(|| Error::Observable(format!("site {s} has no image")))?;
                ops.push((to, p));
            }
            out.add(PauliString::from_ops(ops)?, t.coeff, t.order);
        }
        Ok(out)
    }

    pub fn truncate(&mut self, policy: TruncationPolicy) {
        match policy {
            TruncationPolicy::None => {}
            TruncationPolicy::MaxOrder(k) => self.terms.retain(|_, t| t.1 <= k),
            TruncationPolicy::CoeffThreshold(eps) => self.terms.retain(|_, t| t.0.abs() >= eps),
            TruncationPolicy::MaxTerms(m) => {
                if self.len() > m {
                    let mut v = self.terms();
                    v.sort_by(|a, b| {
                        b.coeff
                            .abs()
                            .total_cmp(&a.coeff.abs())
                            .then_with(|| a.string.cmp(&b.string))
                    });
                    v.truncate(m);
                    self.terms = v.into_iter().map(|t| (t.string, (t.coeff, t.order))).collect();
                }
            }
        }
    }

    /// `⟨0…0| Σ c P |0…0⟩`: the sum of coefficients of diagonal strings.
    pub fn zero_state_expectation(&self) -> f64 {
        self.terms()
            .iter()
            .filter(|t| t.string.is_diagonal())
            .map(|t| t.coeff)
            .sum()
    }

    /// Writes `coeff,order,string` rows in canonical order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["coeff", "order", "string"])?;
        for t in self.terms() {
            wr.write_record([format!("{:.16e}", t.coeff), t.order.to_string(), t.string.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<PauliSum> {
        let mut rd = csv::Reader::from_reader(r);
        let mut sum = PauliSum::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let coeff: f64 = field(0)
                .parse()
                .map_err(|_| Error::Observable(format!("bad coefficient `{}`", field(0))))?;
            let order: u32 = field(1)
                .parse()
                .map_err(|_| Error::Observable(format!("bad order `{}`", field(1))))?;
            sum.add(PauliString::parse_dump(field(2))?, coeff, order);
        }
        Ok(sum)
    }
}

/// Stabilizer and single-site observables used in the experiments.
pub fn observable_library(name: &str) -> Result<PauliSum> {
    let spec = match name {
        "Z62" => "Z62",
        "W10" => "X13,29,31;Y9,30;Z8,12,17,28,32",
        "W17" => "X37,41,52,56,57,58,62,79;Y75;Z38,40,42,63,72,80,90,91",
        "W17tilde" => "X37,41,52,56,57,58,62,79;Y38,40,42,63,72,80,90,91;Z75",
        other => return Err(Error::UnknownObservable(other.into())),
    };
    Ok(PauliSum::from_string(PauliString::parse_spec(spec)?))
}

pub const LIBRARY_NAMES: [&str; 4] = ["Z62", "W10", "W17", "W17tilde"];

/// Resolves a library name or a block-form string spec.
pub fn parse_observable(spec: &str) -> Result<PauliSum> {
    match observable_library(spec) {
        Err(Error::UnknownObservable(_)) => Ok(PauliSum::from_string(PauliString::parse_spec(spec)?)),
        other => other,
    }
}

/// `R_ZZ† P R_ZZ` on edge `(a, b)`: one string and a sign.
#[inline]
pub fn conjugate_rzz(s: PauliString, a: usize, b: usize) -> (PauliString, f64) {
    let (pa, pb) = (s.get(a), s.get(b));
    if pa == Pauli::I && pb == Pauli::I {
        return (s, 1.0);
    }
    let rule = rzz_rules()[4 * pa.index() + pb.index()];
    let mut out = s;
    out.set(a, rule.first);
    out.set(b, rule.second);
    (out, rule.sign)
}

/// Branches of one letter under `R_X(θ)`: `(image, factor, is_sine)`.
type RxColumn = Vec<(Pauli, f64, bool)>;

fn rx_columns(theta: f64) -> [RxColumn; 4] {
    let s = rx_superop(theta);
    std::array::from_fn(|b| {
        (0..4)
            .filter(|&a| s[a][b] != 0.0)
            .map(|a| (Pauli::from_index(a), s[a][b], a != b))
            .collect()
    })
}

/// Appends the branches of `t` under a full `R_X` layer to `out`. Letters
/// that are fixed points of the gate do not branch.
fn expand_rx(t: PauliTerm, cols: &[RxColumn; 4], out: &mut Vec<PauliTerm>) {
    let start = out.len();
    out.push(t);
    for site in t.string.support() {
        let letter = t.string.get(site);
        let col = &cols[letter.index()];
        if let [(img, f, _)] = col[..] {
            if img == letter && f == 1.0 {
                continue;
            }
        }
        let n = out.len();
        for i in start..n {
            let base = out[i];
            let mut first = true;
            for &(img, f, sine) in col {
                let mut string = base.string;
                string.set(site, img);
                let next = PauliTerm {
                    string,
                    coeff: base.coeff * f,
                    order: base.order + sine as u32,
                };
                if first {
                    out[i] = next;
                    first = false;
                } else {
                    out.push(next);
                }
            }
        }
    }
}

/// `R_X(θ)†^{⊗n} P R_X(θ)^{⊗n}` for one term.
pub fn conjugate_rx(t: PauliTerm, theta: f64) -> PauliSum {
    let cols = rx_columns(theta);
    let mut out = Vec::new();
    expand_rx(t, &cols, &mut out);
    PauliSum::from_terms(out)
}

/// Back-propagation settings beyond the truncation policy.
#[derive(Clone, Copy, Debug)]
pub struct PropagationLimits {
    /// Hard cap on live terms; exceeding it is an error.
    pub term_cap: usize,
}

impl Default for PropagationLimits {
    fn default() -> Self {
        PropagationLimits {
            term_cap: DEFAULT_TERM_CAP,
        }
    }
}

fn check_fits(obs: &PauliSum, lattice: &Lattice) -> Result<()> {
    if lattice.num_sites() > MAX_SITES {
        return Err(Error::InvalidArgument(format!(
            "Pauli propagation supports at most {MAX_SITES} sites, lattice has {}",
            lattice.num_sites()
        )));
    }
    if let Some(m) = obs.max_site() {
        if m >= lattice.num_sites() {
            return Err(Error::Observable(format!(
                "observable touches site {m}, lattice has {} sites",
                lattice.num_sites()
            )));
        }
    }
    Ok(())
}

fn apply_layer(sum: &PauliSum, layer: Layer, lattice: &Lattice, cap: usize) -> Result<PauliSum> {
    // canonical input order makes the merge independent of the worker count
    let input = sum.terms();
    match layer {
        Layer::Rzz => {
            let edges = lattice.edges();
            let mapped: Vec<PauliTerm> = input
                .par_iter()
                .map(|t| {
                    let mut s = t.string;
                    let mut sign = 1.0;
                    for &(a, b) in edges {
                        let (n, g) = conjugate_rzz(s, a, b);
                        s = n;
                        sign *= g;
                    }
                    PauliTerm {
                        string: s,
                        coeff: t.coeff * sign,
                        order: t.order,
                    }
                })
                .collect();
            Ok(PauliSum::from_terms(mapped))
        }
        Layer::Rx(theta) => {
            let cols = rx_columns(theta);
            let mut merged = PauliSum::new();
            let mut start = 0;
            while start < input.len() {
                // batch so that unmerged branches stay near the cap
                let mut end = start;
                let mut branches = 0usize;
                while end < input.len() && (branches == 0 || branches < RX_BATCH_BRANCHES) {
                    let b = rx_branch_count(&input[end], &cols);
                    if b > cap {
                        return Err(Error::ResourceLimit(format!(
                            "one Pauli string branches into {b} terms under R_X (cap {cap})"
                        )));
                    }
                    branches += b;
                    end += 1;
                }
                let chunks: Vec<Vec<PauliTerm>> = input[start..end]
                    .par_chunks(256)
                    .map(|chunk| {
                        let mut out = Vec::with_capacity(chunk.len() * 2);
                        for &t in chunk {
                            expand_rx(t, &cols, &mut out);
                        }
                        out
                    })
                    .collect();
                for t in chunks.into_iter().flatten() {
                    merged.add(t.string, t.coeff, t.order);
                }
                if merged.len() > cap {
                    return Err(Error::ResourceLimit(format!(
                        "more than {cap} Pauli terms after an R_X layer"
                    )));
                }
                start = end;
            }
            merged.prune();
            Ok(merged)
        }
    }
}

/// Unmerged branches expanded in one parallel batch.
const RX_BATCH_BRANCHES: usize = 1 << 20;

fn rx_branch_count(t: &PauliTerm, cols: &[RxColumn; 4]) -> usize {
    t.string
        .ops()
        .iter()
        .map(|&(_, p)| cols[p.index()].len())
        .fold(1usize, |acc, n| acc.saturating_mul(n))
}

/// Conjugates `obs` by exactly the given layers, in order, without truncation.
pub fn layerwise_conjugate(obs: &PauliSum, layers: &[Layer], lattice: &Lattice) -> Result<PauliSum> {
    check_fits(obs, lattice)?;
    let mut sum = obs.clone();
    for &layer in layers {
        sum = apply_layer(&sum, layer, lattice, DEFAULT_TERM_CAP)?;
    }
    Ok(sum)
}

/// Heisenberg operator `U_T† O U_T`, truncated after every layer.
pub fn back_propagate(
    obs: &PauliSum,
    circuit: &CircuitSpec,
    lattice: &Lattice,
    policy: TruncationPolicy,
) -> Result<PauliSum> {
    back_propagate_with(obs, circuit, lattice, policy, PropagationLimits::default(), |_, _, _| {})
}

/// [`back_propagate`] with explicit limits and a callback invoked after
/// every layer with `(layer index, layer, current sum)`.
pub fn back_propagate_with(
    obs: &PauliSum,
    circuit: &CircuitSpec,
    lattice: &Lattice,
    policy: TruncationPolicy,
    limits: PropagationLimits,
    mut observer: impl FnMut(usize, Layer, &PauliSum),
) -> Result<PauliSum> {
    check_fits(obs, lattice)?;
    policy.validate()?;
    let mut sum = obs.clone();
    for (i, layer) in circuit.heisenberg_layers().into_iter().enumerate() {
        sum = apply_layer(&sum, layer, lattice, limits.term_cap)?;
        sum.truncate(policy);
        observer(i, layer, &sum);
    }
    Ok(sum)
}

/// `⟨0…0| R_X(θ)† P R_X(θ) |0…0⟩` for every site, indexed by letter.
pub fn rx_closure(theta: f64) -> [f64; 4] {
    let s = rx_superop(theta);
    std::array::from_fn(|b| (0..4).map(|a| s[a][b] * Pauli::from_index(a).zero_state_value()).sum())
}

/// `⟨0…0| O |0…0⟩` where `O` is `sum` conjugated by one more `R_X(θ)`
/// layer, evaluated as a product of single-site values without expanding.
pub fn rx_closed_expectation(sum: &PauliSum, theta: f64) -> f64 {
    let site = rx_closure(theta);
    sum.terms()
        .iter()
        .map(|t| t.coeff * t.string.ops().iter().map(|&(_, p)| site[p.index()]).product::<f64>())
        .sum()
}

/// `⟨0…0| U† O U |0…0⟩` by back-propagation. When the outermost layer is
/// `R_X` it is folded into the closure exactly instead of being expanded;
/// truncation applies to the preceding layers only.
pub fn expectation(
    obs: &PauliSum,
    circuit: &CircuitSpec,
    lattice: &Lattice,
    policy: TruncationPolicy,
    limits: PropagationLimits,
) -> Result<(f64, PauliSum)> {
    check_fits(obs, lattice)?;
    policy.validate()?;
    let mut layers = circuit.heisenberg_layers();
    let last = layers.pop();
    let mut sum = obs.clone();
    for layer in layers {
        sum = apply_layer(&sum, layer, lattice, limits.term_cap)?;
        sum.truncate(policy);
    }
    let value = match last {
        Some(Layer::Rx(theta)) => rx_closed_expectation(&sum, theta),
        Some(Layer::Rzz) => {
            sum = apply_layer(&sum, Layer::Rzz, lattice, limits.term_cap)?;
            sum.truncate(policy);
            sum.zero_state_expectation()
        }
        None => sum.zero_state_expectation(),
    };
    Ok((value, sum))
}

/// Closed forms for `⟨Z62⟩` after 3 and 4 steps on the device lattice.
pub fn z62_closed_form(theta: f64, steps: usize) -> Option<f64> {
    let (s, c) = theta.sin_cos();
    match steps {
        3 => Some(c.powi(3) * (1.0 + s * s)),
        4 => Some(c.powi(4) * (1.0 + 2.0 * s * s - 3.0 * c * c * s.powi(10))),
        _ => None,
    }
}
