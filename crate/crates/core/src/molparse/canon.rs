//! Permutation-invariant canonical labelling.
//!
//! Atoms are partitioned by local invariants and refined Morgan-style by the
//! multiset of neighbor classes until stable. Remaining ties are broken by
//! individualizing each candidate of the first non-singleton cell, re-refining,
//! and keeping the labelling whose serialized graph is lexicographically
//! smallest. Candidates that are structural twins (same neighbors, same bond
//! orders) are interchangeable by an automorphism, so only one per twin class
//! is explored.

use std::fmt::Write;

use super::MolGraph;

/// Upper bound on explored leaves of the tie-breaking search.
const MAX_LEAVES: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalForm {
    pub key: String,
    /// `order[i]` is the original index of the atom at canonical position `i`.
    pub order: Vec<usize>,
}

type AtomLabel = (u8, i8, bool, u8);
type Encoding = (Vec<AtomLabel>, Vec<(usize, usize, usize)>);

struct Ctx<'a> {
    labels: Vec<AtomLabel>,
    adj: Vec<Vec<(usize, usize)>>,
    g: &'a MolGraph,
    leaves: usize,
    best: Option<(Encoding, Vec<usize>)>,
}

pub fn canonical_key(g: &MolGraph) -> String {
    canonical_form(g).key
}

pub fn canonical_form(g: &MolGraph) -> CanonicalForm {
    let n = g.num_atoms();
    let adj: Vec<Vec<(usize, usize)>> = {
        let mut adj = vec![Vec::new(); n];
        for b in &g.bonds {
            let code = b.order.index();
            adj[b.begin].push((b.end, code));
            adj[b.end].push((b.begin, code));
        }
        adj
    };
    let labels: Vec<AtomLabel> = g
        .atoms
        .iter()
        .map(|a| (a.element.atomic_number(), a.formal_charge, a.aromatic, a.implicit_h))
        .collect();
    let mut ctx = Ctx {
        labels,
        adj,
        g,
        leaves: 0,
        best: None,
    };

    // Initial cells: (element, charge, degree, implicit_h) then aromaticity.
    let init: Vec<(u8, i8, usize, u8, bool)> = (0..n)
        .map(|v| {
            let (z, q, ar, h) = ctx.labels[v];
            (z, q, ctx.adj[v].len(), h, ar)
        })
        .collect();
    let ranks = ranks_from_keys(&init);
    let ranks = ctx.refine(ranks);
    ctx.search(ranks);

    let (enc, order) = ctx.best.take().unwrap_or_default();
    CanonicalForm {
        key: serialize(&enc),
        order,
    }
}

/// Position-style ranks: rank = number of atoms with a strictly smaller key.
fn ranks_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    for pos in 0..idx.len() {
        ranks[idx[pos]] = if pos > 0 && keys[idx[pos]] == keys[idx[pos - 1]] {
            ranks[idx[pos - 1]]
        } else {
            pos
        };
    }
    ranks
}

fn num_cells(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

impl Ctx<'_> {
    fn refine(&self, mut ranks: Vec<usize>) -> Vec<usize> {
        let mut cells = num_cells(&ranks);
        loop {
            let keys: Vec<(usize, Vec<(usize, usize)>)> = (0..ranks.len())
                .map(|v| {
                    let mut nb: Vec<(usize, usize)> =
                        self.adj[v].iter().map(|&(u, code)| (ranks[u], code)).collect();
                    nb.sort_unstable();
                    (ranks[v], nb)
                })
                .collect();
            let next = ranks_from_keys(&keys);
            let next_cells = num_cells(&next);
            ranks = next;
            if next_cells == cells {
                return ranks;
            }
            cells = next_cells;
        }
    }

    fn search(&mut self, ranks: Vec<usize>) {
        if self.leaves >= MAX_LEAVES {
            return;
        }
        let n = ranks.len();
        // First non-singleton cell in rank order.
        let mut counts = vec![0usize; n];
        for &r in &ranks {
            counts[r] += 1;
        }
        let Some(target) = (0..n).find(|&r| counts[r] > 1) else {
            self.leaf(&ranks);
            return;
        };
        let members: Vec<usize> = (0..n).filter(|&v| ranks[v] == target).collect();
        let mut explored: Vec<usize> = Vec::new();
        for &v in &members {
            if explored.iter().any(|&u| self.twins(u, v)) {
                continue;
            }
            explored.push(v);
            let mut next = ranks.clone();
            for &u in &members {
                if u != v {
                    next[u] = target + 1;
                }
            }
            let next = self.refine(next);
            self.search(next);
        }
    }

    /// Twins: swapping `u` and `v` is an automorphism of the labelled graph.
    fn twins(&self, u: usize, v: usize) -> bool {
        if self.labels[u] != self.labels[v] {
            return false;
        }
        let mut nu: Vec<(usize, usize)> = self.adj[u].iter().filter(|e| e.0 != v).copied().collect();
        let mut nv: Vec<(usize, usize)> = self.adj[v].iter().filter(|e| e.0 != u).copied().collect();
        nu.sort_unstable();
        nv.sort_unstable();
        nu == nv
    }

    fn leaf(&mut self, ranks: &[usize]) {
        self.leaves += 1;
        let n = ranks.len();
        let mut order = vec![0; n];
        for (v, &r) in ranks.iter().enumerate() {
            order[r] = v;
        }
        let atoms: Vec<AtomLabel> = order.iter().map(|&v| self.labels[v]).collect();
        let mut edges: Vec<(usize, usize, usize)> = self
            .g
            .bonds
            .iter()
            .map(|b| {
                let (a, c) = (ranks[b.begin], ranks[b.end]);
                (a.min(c), a.max(c), b.order.index())
            })
            .collect();
        edges.sort_unstable();
        let enc = (atoms, edges);
        let better = match &self.best {
            None => true,
            Some((best, _)) => enc < *best,
        };
        if better {
            self.best = Some((enc, order));
        }
    }
}

fn serialize((atoms, edges): &Encoding) -> String {
    let mut s = String::with_capacity(atoms.len() * 8 + edges.len() * 8);
    for (i, &(z, q, ar, h)) in atoms.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{z}");
        if ar {
            s.push('a');
        }
        if q != 0 {
            let _ = write!(s, "{q:+}");
        }
        if h != 0 {
            let _ = write!(s, "h{h}");
        }
    }
    s.push('|');
    for (i, &(a, b, o)) in edges.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{a}-{b}");
        if o != 0 {
            let _ = write!(s, ":{o}");
        }
    }
    s
}
