use super::MolGraph;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingFlags {
    pub atoms: Vec<bool>,
    pub bonds: Vec<bool>,
}

/// Flags bonds lying on a cycle (non-bridges) and atoms incident to one.
pub fn ring_membership(g: &MolGraph) -> RingFlags {
    let is_bridge = bridges(g.num_atoms(), &g.edges());
    let bonds: Vec<bool> = is_bridge.iter().map(|b| !b).collect();
    let mut atoms = vec![false; g.num_atoms()];
    for (bond, &ring) in g.bonds.iter().zip(&bonds) {
        if ring {
            atoms[bond.begin] = true;
            atoms[bond.end] = true;
        }
    }
    RingFlags { atoms, bonds }
}

/// Bridge detection over an undirected simple graph (iterative low-link DFS).
/// Returns one flag per edge, `true` for bridges.
pub fn bridges(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for (i, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, i));
        adj[v].push((u, i));
    }
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; edges.len()];
    let mut timer = 0;
    // (vertex, edge used to enter, next neighbor position)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(&(v, parent_edge, pos)) = stack.last() {
            if pos < adj[v].len() {
                let (w, e) = adj[v][pos];
                if let Some(top) = stack.last_mut() {
                    top.2 += 1;
                }
                if e == parent_edge {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, e, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[v]);
                    if low[v] > disc[p] {
                        is_bridge[parent_edge] = true;
                    }
                }
            }
        }
    }
    is_bridge
}
