//! Watts-Strogatz small-world contact networks in compressed adjacency form.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{check_probability, Error, Result};
use crate::rng::{self, Stream};

/// Immutable undirected contact graph.
///
/// Neighbors of node `u` are `neighbors[offsets[u]..offsets[u + 1]]`, sorted
/// ascending. Every edge is stored twice, once per endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    k: usize,
    rewire_p_bits: u64,
    seed: u64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Network {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nearest-neighbor degree of the initial ring.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rewire_p(&self) -> f64 {
        f64::from_bits(self.rewire_p_bits)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[u32] {
        &self.neighbors
    }

    /// Undirected edges as `(u, v)` with `u < v`, in adjacency order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| (u as u32) < v)
                .map(move |v| (u as u32, v))
        })
    }

    /// Graph with no edges; useful for isolating agents in tests.
    pub fn empty(n: usize) -> Self {
        Self::from_adjacency(vec![Vec::new(); n], 0, 0.0, 0)
    }

    /// Builds a network from an explicit undirected edge list.
    ///
    /// Self-loops and duplicate edges are rejected.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v || u as usize >= n || v as usize >= n {
                return Err(Error::InvalidParameter {
                    name: "edges",
                    reason: format!("bad edge ({u}, {v}) for n = {n}"),
                });
            }
            if adj[u as usize].contains(&v) {
                return Err(Error::InvalidParameter {
                    name: "edges",
                    reason: format!("duplicate edge ({u}, {v})"),
                });
            }
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        Ok(Self::from_adjacency(adj, 0, 0.0, 0))
    }

    fn from_adjacency(mut adj: Vec<Vec<u32>>, k: usize, rewire_p: f64, seed: u64) -> Self {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(adj.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in adj.iter_mut() {
            list.sort_unstable();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Self {
            n,
            k,
            rewire_p_bits: rewire_p.to_bits(),
            seed,
            offsets,
            neighbors,
        }
    }

    /// Writes the edge list as `u,v` rows (zero-based, `u < v`).
    pub fn write_edge_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "u,v")?;
        for (u, v) in self.edges() {
            writeln!(out, "{u},{v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Classic Watts-Strogatz construction.
///
/// Starts from the ring lattice where every node links to its `k/2` nearest
/// neighbors on each side, then visits each clockwise lattice edge `(u, u+j)`
/// once (outer loop over `j`, inner over `u`) and with probability `rewire_p`
/// moves its far endpoint to a uniformly random node. Targets that would create
/// a self-loop or a parallel edge are resampled. The edge count is conserved.
///
/// The random stream is ChaCha8 keyed from `seed`, so the result is identical
/// across platforms.
pub fn build_small_world(n: usize, k: usize, rewire_p: f64, seed: u64) -> Result<Network> {
    if k < 2 || k % 2 != 0 || k >= n {
        return Err(Error::InvalidDegree { n, k });
    }
    check_probability("rewire_p", rewire_p)?;
    if n > u32::MAX as usize {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "node ids are 32-bit".into(),
        });
    }

    let half = k / 2;
    let mut adj: Vec<Vec<u32>> = (0..n)
        .map(|u| {
            let mut list = Vec::with_capacity(k + 2);
            for j in 1..=half {
                list.push(((u + j) % n) as u32);
                list.push(((u + n - j) % n) as u32);
            }
            list
        })
        .collect();

    if rewire_p > 0.0 {
        let mut rng = rng::sequential(seed, Stream::Network);
        for j in 1..=half {
            for u in 0..n {
                if !(rng.random::<f64>() < rewire_p) {
                    continue;
                }
                let v = ((u + j) % n) as u32;
                // The lattice edge may already have been moved by an earlier
                // rewiring of its other endpoint.
                if !adj[u].contains(&v) || adj[u].len() >= n - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..n as u32);
                    if w as usize != u && !adj[u].contains(&w) {
                        break w;
                    }
                };
                remove_value(&mut adj[u], v);
                remove_value(&mut adj[v as usize], u as u32);
                adj[u].push(w);
                adj[w as usize].push(u as u32);
            }
        }
    }

    Ok(Network::from_adjacency(adj, k, rewire_p, seed))
}

fn remove_value(list: &mut Vec<u32>, value: u32) {
    if let Some(pos) = list.iter().position(|&x| x == value) {
        list.swap_remove(pos);
    }
}

/// Mean, minimum and maximum degree.
pub fn degree_stats(net: &Network) -> (f64, usize, usize) {
    if net.n() == 0 {
        return (0.0, 0, 0);
    }
    let (min, max) = (0..net.n())
        .map(|u| net.degree(u))
        .fold((usize::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
    (net.neighbor_array().len() as f64 / net.n() as f64, min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn edge_set(net: &Network) -> BTreeSet<(u32, u32)> {
        net.edges().collect()
    }

    #[test]
    fn ring_without_rewiring_is_cycle() {
        let net = build_small_world(10, 2, 0.0, 123).unwrap();
        assert_eq!(net.edge_count(), 10);
        let expected: BTreeSet<_> = (0..10u32)
            .map(|u| {
                let v = (u + 1) % 10;
                (u.min(v), u.max(v))
            })
            .collect();
        assert_eq!(edge_set(&net), expected);
        assert_eq!(degree_stats(&net), (2.0, 2, 2));
    }

    #[test]
    fn ring_lattice_k4() {
        let net = build_small_world(20, 4, 0.0, 0).unwrap();
        assert_eq!(degree_stats(&net), (4.0, 4, 4));
        assert_eq!(net.neighbors(0), &[1, 2, 18, 19]);
    }

    #[test]
    fn full_rewiring_keeps_simple_symmetric_graph() {
        let net = build_small_world(20, 4, 1.0, 7).unwrap();
        assert_eq!(net.edge_count(), 40);
        for u in 0..20 {
            let list = net.neighbors(u);
            assert!(!list.contains(&(u as u32)), "self-loop at {u}");
            assert!(list.windows(2).all(|w| w[0] < w[1]), "duplicate at {u}");
            for &v in list {
                assert!(net.neighbors(v as usize).contains(&(u as u32)));
            }
        }
        let (mean, _, _) = degree_stats(&net);
        assert_eq!(mean, 4.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            build_small_world(10, 3, 0.1, 0),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(matches!(
            build_small_world(10, 10, 0.1, 0),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(matches!(
            build_small_world(10, 0, 0.1, 0),
            Err(Error::InvalidDegree { .. })
        ));
        assert!(matches!(
            build_small_world(10, 2, 1.5, 0),
            Err(Error::InvalidProbability { .. })
        ));
    }

    #[test]
    fn from_edges_rejects_loops_and_duplicates() {
        assert!(Network::from_edges(3, &[(0, 0)]).is_err());
        assert!(Network::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(net.neighbors(1), &[0, 2]);
    }

    #[test]
    fn edge_csv_export() {
        let dir = std::env::temp_dir().join(format!("vaxnet-edges-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("edges.csv");
        build_small_world(6, 2, 0.0, 0)
            .unwrap()
            .write_edge_csv(&path)
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "u,v\n0,1\n0,5\n1,2\n2,3\n3,4\n4,5\n");
        std::fs::remove_dir_all(dir).ok();
    }
}
