//! Heisenberg-picture PEPO evolution with simple-update truncation.
//!
//! Each site tensor has legs `[p, b_0, b_1, …]`: a physical leg of dimension 4
//! in the Pauli basis `(I, X, Y, Z)` followed by one virtual leg per incident
//! edge, in increasing edge index. Tensors are stored bare (Vidal form): the
//! bond weights λ live on the edges and enter every contraction exactly once.
//! Since all superoperators are real in the Pauli basis, so is everything here.

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, Layer};
use crate::error::{Error, Result};
use crate::gates::{rx_superop, rzz_rules, CliffordImage, ZERO_STATE_CLOSURE};
use crate::lattice::Lattice;
use crate::pauli::PauliSum;
use crate::tensor::{gemm, svd_truncate, thin_qr, Network, Tensor, DEFAULT_MEMORY_CAP};

/// Bond weights below this are clamped when divided out.
pub const LAMBDA_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Pepo {
    lattice: Lattice,
    sites: Vec<Tensor>,
    lambdas: Vec<Vec<f64>>,
    log_scale: f64,
}

/// Truncation and timing summary of one circuit layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    /// `"rzz"` or `"rx"`.
    pub kind: String,
    /// Largest discarded weight over the layer's edges.
    pub max_discarded: f64,
    /// Sum of discarded weights over the layer's edges.
    pub sum_discarded: f64,
    /// Two-site updates actually performed (trivial ones are skipped).
    pub updates: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub layers: Vec<LayerReport>,
    /// Bond dimension of every edge after the last layer.
    pub final_bond_dims: Vec<usize>,
}

impl EvolutionReport {
    pub fn max_discarded(&self) -> f64 {
        self.layers.iter().map(|l| l.max_discarded).fold(0.0, f64::max)
    }

    pub fn total_discarded(&self) -> f64 {
        self.layers.iter().map(|l| l.sum_discarded).sum()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.final_bond_dims.iter().copied().max().unwrap_or(1)
    }
}

/// Product PEPO of a single Pauli string. The coefficient's sign goes into
/// the lowest site tensor and its magnitude into the log-scale.
pub fn init_pepo(lattice: &Lattice, obs: &PauliSum) -> Result<Pepo> {
    let term = obs.single_term().ok_or_else(|| {
        Error::Observable(format!("a PEPO starts from one Pauli string, got {} terms", obs.len()))
    })?;
    if let Some(m) = term.string.max_site() {
        if m >= lattice.num_sites() {
            return Err(Error::Observable(format!(
                "observable touches site {m}, lattice has {} sites",
                lattice.num_sites()
            )));
        }
    }
    let sites = (0..lattice.num_sites())
        .map(|s| {
            let mut shape = vec![4];
            shape.extend(std::iter::repeat_n(1, lattice.degree(s)));
            let mut t = Tensor::zeros(shape);
            t.data_mut()[term.string.get(s).index()] = 1.0;
            t
        })
        .collect::<Vec<_>>();
    let mut pepo = Pepo {
        lattice: lattice.clone(),
        sites,
        lambdas: vec![vec![1.0]; lattice.edges().len()],
        log_scale: term.coeff.abs().ln(),
    };
    if term.coeff < 0.0 {
        pepo.sites[0].scale(-1.0);
    }
    Ok(pepo)
}

/// Result of one two-site update, applied after the whole layer is computed.
struct EdgeUpdate {
    edge: usize,
    a: Tensor,
    b: Tensor,
    lambda: Vec<f64>,
    log_norm: f64,
    discarded: f64,
    floor_hits: usize,
}

impl Pepo {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn site_tensor(&self, site: usize) -> &Tensor {
        &self.sites[site]
    }

    pub fn bond_weights(&self, edge: usize) -> &[f64] {
        &self.lambdas[edge]
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.lambdas.iter().map(Vec::len).collect()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// True when the site's operator content is the identity alone.
    pub fn is_identity_site(&self, site: usize) -> bool {
        let t = &self.sites[site];
        let block = t.len() / 4;
        t.data()[block..].iter().all(|&x| x == 0.0)
    }

    /// Multiplies every physical leg by the `R_X(θ)` superoperator.
    pub fn apply_rx_layer(&mut self, theta: f64) {
        let s = rx_superop(theta);
        self.sites.par_iter_mut().for_each(|t| {
            let block = t.len() / 4;
            let old = t.data().to_vec();
            let data = t.data_mut();
            for a in 0..4 {
                for j in 0..block {
                    let mut acc = 0.0;
                    for b in 0..4 {
                        if s[a][b] != 0.0 {
                            acc += s[a][b] * old[b * block + j];
                        }
                    }
                    data[a * block + j] = acc;
                }
            }
        });
    }

    /// Applies `R_ZZ` on the given vertex-disjoint edges with simple-update
    /// truncation; returns each edge's discarded weight (0 for skipped edges).
    pub fn apply_rzz_layer(&mut self, edges: &[usize], chi: usize, eps: f64) -> Result<Vec<f64>> {
        if chi == 0 {
            return Err(Error::InvalidArgument("chi must be at least 1".into()));
        }
        let mut touched = vec![false; self.sites.len()];
        for &e in edges {
            let &(a, b) = self
                .lattice
                .edges()
                .get(e)
                .ok_or_else(|| Error::InvalidArgument(format!("no edge {e}")))?;
            if std::mem::replace(&mut touched[a], true) || std::mem::replace(&mut touched[b], true) {
                return Err(Error::InvalidArgument("layer edges must be vertex-disjoint".into()));
            }
        }
        let this = &*self;
        let updates: Vec<Option<EdgeUpdate>> = edges
            .par_iter()
            .map(|&e| this.update_edge(e, chi, eps))
            .collect::<Result<_>>()?;
        let mut discarded = vec![0.0; edges.len()];
        let mut floor_hits = 0;
        for (slot, u) in discarded.iter_mut().zip(updates) {
            let Some(u) = u else { continue };
            let (a, b) = self.lattice.edges()[u.edge];
            self.sites[a] = u.a;
            self.sites[b] = u.b;
            self.lambdas[u.edge] = u.lambda;
            self.log_scale += u.log_norm;
            floor_hits += u.floor_hits;
            *slot = u.discarded;
        }
        if floor_hits > 0 {
            warn!("{floor_hits} bond weights below {LAMBDA_FLOOR:e} clamped when divided out");
        }
        Ok(discarded)
    }

    /// Position of `edge` among the virtual legs of `site`.
    fn leg_of(&self, site: usize, edge: usize) -> usize {
        self.lattice
            .incident_edges(site)
            .position(|e| e == edge)
            .expect("edge is incident")
    }

    /// Site tensor with λ absorbed on every bond except `edge`, permuted to
    /// `[others…, p, edge]`. Returns it with the permutation and the weights
    /// of the other bonds in leg order.
    fn absorbed(&self, site: usize, edge: usize) -> Result<(Tensor, Vec<usize>, Vec<Vec<f64>>)> {
        let mut t = self.sites[site].clone();
        let j = self.leg_of(site, edge);
        let mut others = Vec::new();
        for (k, e) in self.lattice.incident_edges(site).enumerate() {
            if k != j {
                t.scale_axis(k + 1, &self.lambdas[e])?;
                others.push(self.lambdas[e].clone());
            }
        }
        let deg = self.lattice.degree(site);
        let mut perm: Vec<usize> = (1..=deg).filter(|&k| k != j + 1).collect();
        perm.push(0);
        perm.push(j + 1);
        Ok((t.permute(&perm)?, perm, others))
    }

    fn update_edge(&self, edge: usize, chi: usize, eps: f64) -> Result<Option<EdgeUpdate>> {
        let (sa, sb) = self.lattice.edges()[edge];
        // I⊗I is fixed by the gate: untouched sites stay product identities
        if self.is_identity_site(sa) && self.is_identity_site(sb) {
            return Ok(None);
        }
        let chi_e = self.lambdas[edge].len();
        let (ta, perm_a, env_a) = self.absorbed(sa, edge)?;
        let (tb, perm_b, env_b) = self.absorbed(sb, edge)?;
        let (qa, ra, na) = reduce(&ta, chi_e)?;
        let (qb, rb, nb) = reduce(&tb, chi_e)?;
        let (ka, kb) = (ra.len() / (4 * chi_e), rb.len() / (4 * chi_e));

        // Θ0[(ka,pa),(kb,pb)] = Σ_k Ra[ka,pa,k] λ_k Rb[kb,pb,k]
        let mut ra_l = ra;
        ra_l.scale_axis(1, &self.lambdas[edge])?;
        let rb_t = rb.permute(&[1, 0])?;
        let theta0 = gemm(ra_l.data(), rb_t.data(), 4 * ka, chi_e, 4 * kb);
        let theta = apply_two_site(&theta0, ka, kb, rzz_rules());
        let m = Tensor::new(vec![4 * ka, 4 * kb], theta)?;
        let svd = svd_truncate(&m, chi, eps)?;
        let k = svd.s.len();
        let smax = svd.s[0];
        if smax.is_nan() || smax <= 0.0 {
            return Err(Error::NonFinite("vanishing two-site block"));
        }
        let lambda: Vec<f64> = svd.s.iter().map(|s| s / smax).collect();

        let mut floor_hits = 0;
        let a = restore(qa, svd.u, na, ka, k, &env_a, &perm_a, &mut floor_hits)?;
        let b = restore(qb, svd.v, nb, kb, k, &env_b, &perm_b, &mut floor_hits)?;
        Ok(Some(EdgeUpdate {
            edge,
            a,
            b,
            lambda,
            log_norm: smax.ln(),
            discarded: svd.discarded_weight,
            floor_hits,
        }))
    }

    /// Runs the circuit in Heisenberg order; `R_ZZ` layers go through the
    /// lattice's edge layers one after another.
    pub fn evolve(&mut self, circuit: &CircuitSpec, chi: usize, eps: f64) -> Result<EvolutionReport> {
        if chi == 0 {
            return Err(Error::InvalidArgument("chi must be at least 1".into()));
        }
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::InvalidArgument("eps must be non-negative".into()));
        }
        let mut report = EvolutionReport::default();
        for layer in circuit.heisenberg_layers() {
            let start = Instant::now();
            let entry = match layer {
                Layer::Rx(theta) => {
                    self.apply_rx_layer(theta);
                    LayerReport {
                        kind: "rx".into(),
                        max_discarded: 0.0,
                        sum_discarded: 0.0,
                        updates: 0,
                        seconds: 0.0,
                    }
                }
                Layer::Rzz => {
                    let (mut max, mut sum, mut updates) = (0.0f64, 0.0, 0);
                    for edges in self.lattice.layers().to_vec() {
                        let before: Vec<bool> = edges
                            .iter()
                            .map(|&e| {
                                let (a, b) = self.lattice.edges()[e];
                                self.is_identity_site(a) && self.is_identity_site(b)
                            })
                            .collect();
                        updates += before.iter().filter(|&&skip| !skip).count();
                        for w in self.apply_rzz_layer(&edges, chi, eps)? {
                            max = max.max(w);
                            sum += w;
                        }
                    }
                    LayerReport {
                        kind: "rzz".into(),
                        max_discarded: max,
                        sum_discarded: sum,
                        updates,
                        seconds: 0.0,
                    }
                }
            };
            let entry = LayerReport {
                seconds: start.elapsed().as_secs_f64(),
                ..entry
            };
            debug!(
                "layer {} {}: max discarded {:.3e}, max bond {}",
                report.layers.len(),
                entry.kind,
                entry.max_discarded,
                self.lambdas.iter().map(Vec::len).max().unwrap_or(1)
            );
            report.layers.push(entry);
        }
        report.final_bond_dims = self.bond_dims();
        Ok(report)
    }

    /// `⟨0…0| O |0…0⟩` by exact contraction of the closed network.
    pub fn close_and_contract(&self) -> Result<f64> {
        self.close_and_contract_capped(DEFAULT_MEMORY_CAP)
    }

    /// Closes every physical leg with `(1, 0, 0, 1)`, puts each λ on one
    /// endpoint, and contracts. Sites whose bonds are all trivial reduce to
    /// scalars and are multiplied out first; the remaining network is
    /// contracted along the cheapest of several candidate orders.
    pub fn close_and_contract_capped(&self, memory_cap: usize) -> Result<f64> {
        let edges = self.lattice.edges();
        let mut prefactor = 1.0;
        let mut tensors = Vec::new();
        let mut labels = Vec::new();
        let mut owners = Vec::new();
        for (s, t) in self.sites.iter().enumerate() {
            let block = t.len() / 4;
            let mut data = vec![0.0; block];
            for (p, &w) in ZERO_STATE_CLOSURE.iter().enumerate() {
                if w != 0.0 {
                    for (d, x) in data.iter_mut().zip(&t.data()[p * block..(p + 1) * block]) {
                        *d += w * x;
                    }
                }
            }
            let mut v = Tensor::new(t.shape()[1..].to_vec(), data)?;
            let mut legs = Vec::new();
            let mut dims = Vec::new();
            for (k, e) in self.lattice.incident_edges(s).enumerate() {
                if edges[e].0 == s {
                    v.scale_axis(k, &self.lambdas[e])?;
                }
                if self.lambdas[e].len() > 1 {
                    legs.push(e);
                    dims.push(self.lambdas[e].len());
                }
            }
            let v = v.reshape(dims)?;
            if legs.is_empty() {
                prefactor *= v.into_scalar()?;
            } else {
                tensors.push(v);
                labels.push(legs);
                owners.push(s);
            }
        }
        if prefactor == 0.0 || tensors.is_empty() {
            return Ok(prefactor * self.log_scale.exp());
        }
        let net = Network::new(tensors, labels)?;
        let path = self.cheapest_path(&net, &owners, memory_cap)?;
        let value = net.contract(&[], Some(&path), memory_cap)?.into_scalar()?;
        let out = prefactor * value * self.log_scale.exp();
        if !out.is_finite() {
            return Err(Error::NonFinite("PEPO contraction"));
        }
        Ok(out)
    }

    fn cheapest_path(&self, net: &Network, owners: &[usize], memory_cap: usize) -> Result<Vec<(usize, usize)>> {
        let n = owners.len();
        let mut candidates = vec![net.greedy_path(), Network::<f64>::sequential_path(&(0..n).collect::<Vec<_>>())];
        // sweeps grown outward from a few seeds
        for seed in [0, n / 2, n - 1] {
            let dist = self.lattice.distances(&[owners[seed]]);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (dist[owners[i]], i));
            candidates.push(Network::<f64>::sequential_path(&order));
        }
        let elem = std::mem::size_of::<f64>() as f64;
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        let mut smallest_peak = f64::INFINITY;
        for path in candidates {
            let cost = net.path_cost(&path)?;
            smallest_peak = smallest_peak.min(cost.largest_intermediate);
            if cost.largest_intermediate * elem > memory_cap as f64 {
                continue;
            }
            if best.as_ref().is_none_or(|(f, _)| cost.flops < *f) {
                best = Some((cost.flops, path));
            }
        }
        best.map(|(_, p)| p).ok_or_else(|| {
            Error::ResourceLimit(format!(
                "final contraction needs an intermediate of {:.3e} bytes (cap {memory_cap})",
                smallest_peak * elem
            ))
        })
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        let file = Checkpoint {
            version: CHECKPOINT_VERSION,
            lattice: serde_json::from_str(&self.lattice.to_json()?)?,
            sites: self
                .sites
                .iter()
                .map(|t| SiteRecord {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
            lambdas: self.lambdas.clone(),
            log_scale: self.log_scale,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Pepo> {
        let file: Checkpoint = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", file.version)));
        }
        let lattice = Lattice::from_json_str(&file.lattice.to_string())?;
        if file.sites.len() != lattice.num_sites() || file.lambdas.len() != lattice.edges().len() {
            return Err(Error::Shape("checkpoint does not match its lattice".into()));
        }
        let sites = file
            .sites
            .into_iter()
            .map(|r| Tensor::new(r.shape, r.data))
            .collect::<Result<Vec<_>>>()?;
        for (s, t) in sites.iter().enumerate() {
            let expect: Vec<usize> = std::iter::once(4)
                .chain(lattice.incident_edges(s).map(|e| file.lambdas[e].len()))
                .collect();
            if t.shape() != expect.as_slice() {
                return Err(Error::Shape(format!("site {s} has shape {:?}, expected {expect:?}", t.shape())));
            }
        }
        Ok(Pepo {
            lattice,
            sites,
            lambdas: file.lambdas,
            log_scale: file.log_scale,
        })
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    lattice: serde_json::Value,
    sites: Vec<SiteRecord>,
    lambdas: Vec<Vec<f64>>,
    log_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct SiteRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Splits `[others…, p, e]` into `q · r` with `r` of shape `(k·4) x χ_e`.
/// When the other legs are already small, `q` is the identity (`None`).
fn reduce(t: &Tensor, chi_e: usize) -> Result<(Option<Tensor>, Tensor, usize)> {
    let n = t.len() / (4 * chi_e);
    let m = t.clone().reshape(vec![n, 4 * chi_e])?;
    if n <= 4 * chi_e {
        return Ok((None, m.reshape(vec![n * 4, chi_e])?, n));
    }
    let (q, r) = thin_qr(&m)?;
    let k = r.shape()[0];
    Ok((Some(q), r.reshape(vec![k * 4, chi_e])?, n))
}

/// Applies a Clifford two-site superoperator to the physical indices of
/// `Θ0[(ka,pa),(kb,pb)]`: the image of `(pa,pb)` receives the signed entry.
fn apply_two_site(theta0: &[f64], ka: usize, kb: usize, rules: &[CliffordImage; 16]) -> Vec<f64> {
    let cols = 4 * kb;
    let mut out = vec![0.0; theta0.len()];
    for i in 0..ka {
        for pa in 0..4 {
            for j in 0..kb {
                for pb in 0..4 {
                    let r = rules[4 * pa + pb];
                    let src = (4 * i + pa) * cols + 4 * j + pb;
                    let dst = (4 * i + r.first.index()) * cols + 4 * j + r.second.index();
                    out[dst] = r.sign * theta0[src];
                }
            }
        }
    }
    out
}

/// Rebuilds a bare site tensor from its reduced factor `u` (`(k·4) x χ'`),
/// divides the environment weights back out and restores the leg order.
#[allow(clippy::too_many_arguments)]
fn restore(
    q: Option<Tensor>,
    u: Tensor,
    n: usize,
    k: usize,
    chi_new: usize,
    env: &[Vec<f64>],
    perm: &[usize],
    floor_hits: &mut usize,
) -> Result<Tensor> {
    let data = match q {
        Some(q) => gemm(q.data(), u.data(), n, k, 4 * chi_new),
        None => u.into_data(),
    };
    let mut shape: Vec<usize> = env.iter().map(Vec::len).collect();
    shape.push(4);
    shape.push(chi_new);
    let mut t = Tensor::new(shape, data)?;
    for (axis, w) in env.iter().enumerate() {
        let inv: Vec<f64> = w
            .iter()
            .map(|&x| {
                if x < LAMBDA_FLOOR {
                    *floor_hits += 1;
                    1.0 / LAMBDA_FLOOR
                } else {
                    1.0 / x
                }
            })
            .collect();
        t.scale_axis(axis, &inv)?;
    }
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    t.permute(&inverse)
}

/// Convenience: evolve a fresh PEPO and close it.
pub fn pepo_expectation(
    lattice: &Lattice,
    circuit: &CircuitSpec,
    obs: &PauliSum,
    chi: usize,
    eps: f64,
) -> Result<(f64, EvolutionReport)> {
    let mut pepo = init_pepo(lattice, obs)?;
    let report = pepo.evolve(circuit, chi, eps)?;
    Ok((pepo.close_and_contract()?, report))
}
