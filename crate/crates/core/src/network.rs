//! Fiber topology, chain requests, providers and candidate-path generation.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::demand::{DemandDistribution, DemandSpec};
use crate::error::{Error, Result};

pub type NodeId = usize;
pub type LinkId = usize;

/// Lengths are compared in integer micro-kilometres so that path ordering
/// and tie detection are exact.
const UNITS_PER_KM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub km: f64,
    units: u64,
}

impl Link {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Undirected fiber network. Immutable once built.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<String>,
    index: HashMap<String, NodeId>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    pair_index: HashMap<(NodeId, NodeId), LinkId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub nodes: Vec<String>,
    pub links: Vec<LinkDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub a: String,
    pub b: String,
    pub km: f64,
}

impl Topology {
    pub fn new(nodes: Vec<String>, links: &[(String, String, f64)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Topology(format!("duplicate node `{n}`")));
            }
        }
        let mut out = Vec::with_capacity(links.len());
        let mut pair_index = HashMap::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (a, b, km) in links {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::Topology(format!("link ({a},{b}) names undeclared node `{a}`")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::Topology(format!("link ({a},{b}) names undeclared node `{b}`")))?;
            if ia == ib {
                return Err(Error::Topology(format!("self-loop on node `{a}`")));
            }
            if !(km.is_finite() && *km > 0.0) {
                return Err(Error::Topology(format!(
                    "link ({a},{b}) has nonpositive or non-finite length {km}"
                )));
            }
            let key = (ia.min(ib), ia.max(ib));
            if pair_index.contains_key(&key) {
                return Err(Error::Topology(format!("duplicate link ({a},{b})")));
            }
            let id = out.len();
            pair_index.insert(key, id);
            adjacency[ia].push((ib, id));
            adjacency[ib].push((ia, id));
            out.push(Link {
                a: ia,
                b: ib,
                km: *km,
                units: (km * UNITS_PER_KM).round() as u64,
            });
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Topology {
            nodes,
            index,
            links: out,
            adjacency,
            pair_index,
        })
    }

    pub fn from_doc(doc: TopologyDoc) -> Result<Self> {
        let links: Vec<_> = doc.links.into_iter().map(|l| (l.a, l.b, l.km)).collect();
        Topology::new(doc.nodes, &links)
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            nodes: self.nodes.clone(),
            links: self
                .links
                .iter()
                .map(|l| LinkDoc {
                    a: self.nodes[l.a].clone(),
                    b: self.nodes[l.b].clone(),
                    km: l.km,
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.pair_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// Links incident to `node`, as (neighbour, link) pairs sorted by neighbour.
    pub fn neighbours(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node]
    }

    pub fn link_label(&self, id: LinkId) -> String {
        let l = &self.links[id];
        format!("{}-{}", self.nodes[l.a], self.nodes[l.b])
    }
}

/// Parses a topology JSON document.
pub fn load_topology(document: &str) -> Result<Topology> {
    let doc: TopologyDoc = serde_json::from_str(document)
        .map_err(|e| Error::Topology(format!("schema violation: {e}")))?;
    Topology::from_doc(doc)
}

/// A loop-free route through the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub length_km: f64,
}

impl Path {
    pub fn display(&self, topology: &Topology) -> String {
        self.nodes
            .iter()
            .map(|&n| topology.node_name(n))
            .collect::<Vec<_>>()
            .join(">")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRequest {
    pub id: String,
    pub source: String,
    pub destination: String,
    pub demand: DemandDistribution,
    /// Provider whose users issue the request; required for coalition runs.
    pub owner: Option<String>,
}

impl ChainRequest {
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let err = |message: String| Error::Request {
            id: self.id.clone(),
            message,
        };
        if topology.node_id(&self.source).is_none() {
            return Err(err(format!("unknown source `{}`", self.source)));
        }
        if topology.node_id(&self.destination).is_none() {
            return Err(err(format!("unknown destination `{}`", self.destination)));
        }
        if self.source == self.destination {
            return Err(err("source equals destination".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestsDoc {
    pub requests: Vec<RequestDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDoc {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub demand: DemandSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

pub fn load_requests(document: &str, topology: &Topology) -> Result<Vec<ChainRequest>> {
    let doc: RequestsDoc = serde_json::from_str(document).map_err(|e| Error::Request {
        id: "<document>".into(),
        message: format!("schema violation: {e}"),
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(doc.requests.len());
    for r in doc.requests {
        if !seen.insert(r.id.clone()) {
            return Err(Error::Request {
                id: r.id,
                message: "duplicate request id".into(),
            });
        }
        let demand = r.demand.build().map_err(|e| Error::Request {
            id: r.id.clone(),
            message: e.to_string(),
        })?;
        let req = ChainRequest {
            id: r.id,
            source: r.src,
            destination: r.dst,
            demand,
            owner: r.provider,
        };
        req.validate(topology)?;
        out.push(req);
    }
    Ok(out)
}

/// A QKD service provider and what it brings to a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provider {
    pub id: String,
    /// QKD wavelengths contributed on every link.
    pub qkd_wavelengths: u32,
    /// KM wavelengths contributed on every link.
    pub km_wavelengths: u32,
    #[serde(default)]
    pub qkd_share_price: f64,
    #[serde(default)]
    pub km_share_price: f64,
    #[serde(default)]
    pub cooperation_fee: f64,
    /// Per-link contribution overrides.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_overrides: Vec<LinkContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkContribution {
    pub a: String,
    pub b: String,
    pub qkd: u32,
    pub km: u32,
}

impl Provider {
    pub fn new(id: impl Into<String>, qkd_wavelengths: u32, km_wavelengths: u32) -> Self {
        Provider {
            id: id.into(),
            qkd_wavelengths,
            km_wavelengths,
            qkd_share_price: 0.0,
            km_share_price: 0.0,
            cooperation_fee: 0.0,
            link_overrides: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("qkd_share_price", self.qkd_share_price),
            ("km_share_price", self.km_share_price),
            ("cooperation_fee", self.cooperation_fee),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "provider `{}`: {name} must be a nonnegative number, got {v}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Dijkstra restricted to non-banned nodes and links. Returns length in
/// units, node sequence and link sequence.
fn restricted_shortest(
    topology: &Topology,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &[bool],
    banned_links: &HashSet<LinkId>,
) -> Option<(u64, Vec<NodeId>, Vec<LinkId>)> {
    let n = topology.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut prev: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == dst {
            break;
        }
        for &(v, l) in topology.neighbours(u) {
            if banned_nodes[v] || banned_links.contains(&l) {
                continue;
            }
            let nd = d + topology.links[l].units;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = Some((u, l));
                heap.push(Reverse((nd, v)));
            }
        }
    }
    if dist[dst] == u64::MAX {
        return None;
    }
    let mut nodes = vec![dst];
    let mut links = Vec::new();
    let mut cur = dst;
    while let Some((p, l)) = prev[cur] {
        nodes.push(p);
        links.push(l);
        cur = p;
    }
    nodes.reverse();
    links.reverse();
    Some((dist[dst], nodes, links))
}

fn path_units(topology: &Topology, links: &[LinkId]) -> u64 {
    links.iter().map(|&l| topology.links[l].units).sum()
}

fn links_of(topology: &Topology, nodes: &[NodeId]) -> Vec<LinkId> {
    nodes
        .windows(2)
        .map(|w| topology.link_between(w[0], w[1]).expect("consecutive path nodes are adjacent"))
        .collect()
}

/// Up to `k` loop-free paths from `src` to `dst` in ascending length, ties
/// broken by the lexicographic order of node indices (declaration order).
///
/// Yen's algorithm; generation continues past the k-th path while further
/// candidates tie with it so that the tie-break is applied over the whole
/// tied set.
pub fn k_shortest_paths(topology: &Topology, src: NodeId, dst: NodeId, k: usize) -> Result<Vec<Path>> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let unreachable = || Error::Unreachable {
        src: topology.node_name(src).to_string(),
        dst: topology.node_name(dst).to_string(),
    };
    if src == dst {
        return Err(Error::Parameter("source equals destination".into()));
    }
    let n = topology.node_count();
    let (len0, nodes0, links0) =
        restricted_shortest(topology, src, dst, &vec![false; n], &HashSet::new()).ok_or_else(unreachable)?;

    let mut accepted: Vec<(u64, Vec<NodeId>, Vec<LinkId>)> = vec![(len0, nodes0.clone(), links0)];
    let mut known: HashSet<Vec<NodeId>> = HashSet::from([nodes0]);
    let mut candidates: BTreeSet<(u64, Vec<NodeId>)> = BTreeSet::new();

    loop {
        let (_, last_nodes, last_links) = accepted.last().cloned().expect("nonempty");
        for j in 0..last_nodes.len() - 1 {
            let spur = last_nodes[j];
            let root = &last_nodes[..=j];
            let mut banned_links = HashSet::new();
            for (_, p, pl) in &accepted {
                if p.len() > j + 1 && &p[..=j] == root {
                    banned_links.insert(pl[j]);
                }
            }
            let mut banned_nodes = vec![false; n];
            for &r in &root[..j] {
                banned_nodes[r] = true;
            }
            if let Some((_, spur_nodes, _)) =
                restricted_shortest(topology, spur, dst, &banned_nodes, &banned_links)
            {
                let mut total = root[..j].to_vec();
                total.extend_from_slice(&spur_nodes);
                if !known.contains(&total) {
                    let units = path_units(topology, &links_of(topology, &total));
                    known.insert(total.clone());
                    candidates.insert((units, total));
                }
            }
            let _ = &last_links;
        }
        let Some(next) = candidates.first().cloned() else { break };
        if accepted.len() >= k {
            let kth = accepted[k - 1].0;
            if next.0 > kth {
                break;
            }
        }
        candidates.remove(&next);
        let links = links_of(topology, &next.1);
        accepted.push((next.0, next.1, links));
    }

    accepted.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    accepted.truncate(k);
    Ok(accepted
        .into_iter()
        .map(|(_, nodes, links)| {
            let length_km = links.iter().map(|&l| topology.links[l].km).sum();
            Path {
                nodes,
                links,
                length_km,
            }
        })
        .collect())
}

/// Candidate paths for a request.
pub fn k_candidate_paths(topology: &Topology, request: &ChainRequest, k: usize) -> Result<Vec<Path>> {
    request.validate(topology)?;
    let src = topology.node_id(&request.source).expect("validated");
    let dst = topology.node_id(&request.destination).expect("validated");
    k_shortest_paths(topology, src, dst, k)
}
