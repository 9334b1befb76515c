//! Qubit interaction graphs: the 127-site heavy-hex device and small patches.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IBM127_JSON: &str = include_str!("../data/ibm127.json");

/// Undirected graph of degree ≤ 3 with its edges partitioned into
/// vertex-disjoint gate layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    name: String,
    num_sites: usize,
    edges: Vec<(usize, usize)>,
    layers: Vec<Vec<usize>>,
    /// Per site, `(neighbor, edge index)` in increasing edge index.
    adjacency: Vec<Vec<(usize, usize)>>,
    labels: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct LatticeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    sites: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
}

/// Bijection between the sites of an extracted sublattice (`0..m`) and the
/// sites of its parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteMap {
    to_parent: Vec<usize>,
    to_local: BTreeMap<usize, usize>,
}

impl SiteMap {
    fn new(parent_sites: Vec<usize>) -> Self {
        let to_local = parent_sites.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        SiteMap {
            to_parent: parent_sites,
            to_local,
        }
    }

    pub fn len(&self) -> usize {
        self.to_parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_parent.is_empty()
    }

    pub fn local(&self, parent: usize) -> Option<usize> {
        self.to_local.get(&parent).copied()
    }

    pub fn parent(&self, local: usize) -> usize {
        self.to_parent[local]
    }

    pub fn parent_sites(&self) -> &[usize] {
        &self.to_parent
    }
}

impl Lattice {
    /// Builds a lattice and computes its gate layers with [`edge_layers`].
    pub fn new(num_sites: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let adjacency = validate(num_sites, &edges)?;
        let layers = edge_layers_of(num_sites, &edges);
        Ok(Lattice {
            name: "custom".into(),
            num_sites,
            edges,
            layers,
            adjacency,
            labels: None,
        })
    }

    /// Builds a lattice with a caller-supplied layer partition.
    pub fn with_layers(num_sites: usize, edges: Vec<(usize, usize)>, layers: Vec<Vec<usize>>) -> Result<Self> {
        let mut lat = Lattice::new(num_sites, edges)?;
        check_layers(&lat.edges, &layers)?;
        lat.layers = layers;
        Ok(lat)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// External numbering of sites, e.g. the parent indices of a light cone.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_sites {
            return Err(Error::Lattice(format!(
                "{} labels for {} sites",
                labels.len(),
                self.num_sites
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// The 127-site heavy-hex device lattice, loaded from the bundled data
    /// file and checked against the known neighborhood of site 62.
    pub fn ibm127() -> Result<Self> {
        let lat = Lattice::from_json_str(IBM127_JSON)
            .map_err(|e| Error::Config(format!("bundled ibm127 data is corrupt: {e}")))?;
        check_ibm127(&lat)?;
        Ok(lat)
    }

    /// Heavy-hex patch of `rows x cols` hexagonal plaquettes.
    ///
    /// Construction: a brick-wall hexagon lattice with vertex rows
    /// `r = 0..=rows`. Row 0 holds x = 0..=2·cols, row `rows` holds
    /// x = p..=2·cols+p with p = (rows-1) mod 2, and inner rows hold
    /// x = 0..=2·cols+1. Rungs join rows r and r+1 at x = (r mod 2) + 2k for
    /// k = 0..=cols. Every edge of this graph is then bisected by a new site.
    ///
    /// Site numbering: hexagon vertices row-major, then one bisecting site per
    /// hexagon edge in edge order (row chains first, then rungs).
    ///
    /// With V = 2RC+2R+2C vertices and E = 3RC+2R+2C-1 hexagon edges, the
    /// patch has V+E = 5RC+4R+4C-1 sites and 2E = 6RC+4R+4C-2 edges.
    pub fn patch(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "patch needs rows >= 1 and cols >= 1, got {rows}x{cols}"
            )));
        }
        let row_range = |r: usize| -> (usize, usize) {
            if r == 0 {
                (0, 2 * cols)
            } else if r == rows {
                let p = (rows - 1) % 2;
                (p, 2 * cols + p)
            } else {
                (0, 2 * cols + 1)
            }
        };
        let mut vid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for r in 0..=rows {
            let (lo, hi) = row_range(r);
            for x in lo..=hi {
                let n = vid.len();
                vid.insert((r, x), n);
            }
        }
        let mut hex_edges = Vec::new();
        for r in 0..=rows {
            let (lo, hi) = row_range(r);
            for x in lo..hi {
                hex_edges.push((vid[&(r, x)], vid[&(r, x + 1)]));
            }
        }
        for r in 0..rows {
            for k in 0..=cols {
                let x = r % 2 + 2 * k;
                hex_edges.push((vid[&(r, x)], vid[&(r + 1, x)]));
            }
        }
        let nv = vid.len();
        let mut edges = Vec::with_capacity(2 * hex_edges.len());
        for (i, &(a, b)) in hex_edges.iter().enumerate() {
            let mid = nv + i;
            edges.push((a, mid));
            edges.push((mid, b));
        }
        Ok(Lattice::new(nv + hex_edges.len(), edges)?.named(format!("patch:{rows}x{cols}")))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: LatticeFile = serde_json::from_str(s)?;
        let edges = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut lat = match file.layers {
            Some(layers) => Lattice::with_layers(file.sites, edges, layers)?,
            None => Lattice::new(file.sites, edges)?,
        };
        if let Some(name) = file.name {
            lat.name = name;
        }
        if let Some(labels) = file.labels {
            lat = lat.with_labels(labels)?;
        }
        Ok(lat)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Lattice::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LatticeFile {
            name: Some(self.name.clone()),
            sites: self.num_sites,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            layers: Some(self.layers.clone()),
            labels: self.labels.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    /// External label of a site (its own index unless labels were set).
    pub fn label(&self, site: usize) -> usize {
        self.labels.as_ref().map_or(site, |l| l[site])
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Neighbors of `site`, sorted.
    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.adjacency[site].iter().map(|&(s, _)| s).collect();
        n.sort_unstable();
        n
    }

    /// Indices of the edges incident on `site`, increasing.
    pub fn incident_edges(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[site].iter().map(|&(_, e)| e)
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, e)| e)
    }

    /// Graph distance from `support` to every site (`usize::MAX` if unreachable).
    pub fn distances(&self, support: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_sites];
        let mut queue = VecDeque::new();
        for &s in support {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &(n, _) in &self.adjacency[s] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[s] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Sites within graph distance `radius` of `support`.
    pub fn ball(&self, support: &[usize], radius: usize) -> Result<BTreeSet<usize>> {
        self.check_support(support)?;
        Ok(self
            .distances(support)
            .into_iter()
            .enumerate()
            .filter(|&(_, d)| d <= radius)
            .map(|(s, _)| s)
            .collect())
    }

    /// Induced subgraph on the radius-`t` ball around `support`, relabeled to
    /// `0..m` in increasing parent order. Site labels of the result are the
    /// parent labels; layers follow the parent's partition.
    pub fn extract_lightcone(&self, support: &[usize], t: usize) -> Result<(Lattice, SiteMap)> {
        if support.is_empty() {
            return Err(Error::InvalidArgument("light cone of an empty support".into()));
        }
        let sites: Vec<usize> = self.ball(support, t)?.into_iter().collect();
        let map = SiteMap::new(sites);
        let mut edges = Vec::new();
        let mut parent_edge = BTreeMap::new();
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if let (Some(la), Some(lb)) = (map.local(a), map.local(b)) {
                parent_edge.insert(e, edges.len());
                edges.push((la, lb));
            }
        }
        let layers: Vec<Vec<usize>> = self
            .layers
            .iter()
            .map(|l| l.iter().filter_map(|e| parent_edge.get(e).copied()).collect::<Vec<_>>())
            .filter(|l| !l.is_empty())
            .collect();
        let labels = map.parent_sites().iter().map(|&s| self.label(s)).collect();
        let sub = Lattice::with_layers(map.len(), edges, layers)?
            .named(format!("{}:lightcone", self.name))
            .with_labels(labels)?;
        Ok((sub, map))
    }

    fn check_support(&self, support: &[usize]) -> Result<()> {
        match support.iter().find(|&&s| s >= self.num_sites) {
            Some(s) => Err(Error::InvalidArgument(format!(
                "site {s} outside lattice of {} sites",
                self.num_sites
            ))),
            None => Ok(()),
        }
    }
}

/// Greedy edge coloring in edge-index order: each edge takes the smallest
/// layer not yet touching either endpoint.
pub fn edge_layers(lattice: &Lattice) -> Vec<Vec<usize>> {
    edge_layers_of(lattice.num_sites, &lattice.edges)
}

fn edge_layers_of(num_sites: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); num_sites];
    let mut layers: Vec<Vec<usize>> = Vec::new();
    for (e, &(a, b)) in edges.iter().enumerate() {
        let color = (0..)
            .find(|c| !used[a].contains(c) && !used[b].contains(c))
            .expect("unbounded range");
        if color == layers.len() {
            layers.push(Vec::new());
        }
        layers[color].push(e);
        used[a].push(color);
        used[b].push(color);
    }
    layers
}

fn validate(num_sites: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut adjacency = vec![Vec::new(); num_sites];
    let mut seen = BTreeSet::new();
    for (e, &(a, b)) in edges.iter().enumerate() {
        if a >= num_sites || b >= num_sites {
            return Err(Error::Lattice(format!("edge {e} ({a},{b}) has a site >= {num_sites}")));
        }
        if a == b {
            return Err(Error::Lattice(format!("edge {e} is a self-loop on {a}")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::Lattice(format!("duplicate edge ({a},{b})")));
        }
        adjacency[a].push((b, e));
        adjacency[b].push((a, e));
    }
    if let Some(s) = (0..num_sites).find(|&s| adjacency[s].len() > 3) {
        return Err(Error::Lattice(format!(
            "site {s} has degree {} > 3",
            adjacency[s].len()
        )));
    }
    Ok(adjacency)
}

fn check_layers(edges: &[(usize, usize)], layers: &[Vec<usize>]) -> Result<()> {
    let mut covered = vec![false; edges.len()];
    for (li, layer) in layers.iter().enumerate() {
        let mut touched = BTreeSet::new();
        for &e in layer {
            let &(a, b) = edges
                .get(e)
                .ok_or_else(|| Error::Lattice(format!("layer {li} names missing edge {e}")))?;
            if covered[e] {
                return Err(Error::Lattice(format!("edge {e} appears in more than one layer")));
            }
            covered[e] = true;
            if !touched.insert(a) || !touched.insert(b) {
                return Err(Error::Lattice(format!("layer {li} is not vertex-disjoint at edge {e}")));
            }
        }
    }
    match covered.iter().position(|c| !c) {
        Some(e) => Err(Error::Lattice(format!("edge {e} is in no layer"))),
        None => Ok(()),
    }
}

fn check_ibm127(lat: &Lattice) -> Result<()> {
    let fail = |what: String| Err(Error::Config(format!("bundled ibm127 data: {what}")));
    if lat.num_sites != 127 || lat.edges.len() != 144 {
        return fail(format!("{} sites / {} edges, expected 127 / 144", lat.num_sites, lat.edges.len()));
    }
    let shell = |r: usize| -> BTreeSet<usize> {
        let d = lat.distances(&[62]);
        (0..127).filter(|&s| d[s] == r).collect()
    };
    let expect: [(usize, &[usize]); 3] = [
        (1, &[61, 63, 72]),
        (2, &[60, 64, 81]),
        (3, &[53, 54, 59, 65, 80, 82]),
    ];
    for (r, sites) in expect {
        let got = shell(r);
        if got != sites.iter().copied().collect() {
            return fail(format!("distance-{r} shell of site 62 is {got:?}, expected {sites:?}"));
        }
    }
    Ok(())
}
