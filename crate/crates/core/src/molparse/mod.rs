//! SMILES parsing into simple undirected molecular graphs, ring perception
//! and a permutation-invariant canonical key.

mod canon;
mod elements;
mod rings;
mod smiles;
mod writer;

pub use canon::{canonical_form, canonical_key, CanonicalForm};
pub use elements::{Element, ElementInfo};
pub use rings::{bridges, ring_membership, RingFlags};
pub use smiles::{parse_smiles, SmilesError};
pub use writer::write_smiles;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    /// Valence contribution in half-units (aromatic counts 1.5).
    pub fn half_valence(self) -> u32 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub implicit_h: u8,
    pub degree: usize,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            aromatic: false,
            implicit_h: 0,
            degree: 0,
            in_ring: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

/// Errors raised when assembling a graph from raw atoms and bonds.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("bond {bond} joins atom {atom} to itself")]
    SelfLoop { bond: usize, atom: usize },
    #[error("bond {bond} references atom {atom} but the graph has {num_atoms} atoms")]
    EndpointOutOfRange {
        bond: usize,
        atom: usize,
        num_atoms: usize,
    },
    #[error("atoms {0} and {1} are joined by more than one bond")]
    DuplicateBond(usize, usize),
}

/// A parsed molecule: heavy atoms (hydrogens implicit) joined by bonds.
#[derive(Clone, Debug, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub num_components: usize,
    pub canonical_key: String,
}

impl MolGraph {
    /// Assembles a graph, recomputing degrees, ring flags, component count and
    /// the canonical key. `implicit_h` values on the atoms are kept as given.
    pub fn from_parts(mut atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut seen = std::collections::HashSet::new();
        for (i, b) in bonds.iter().enumerate() {
            for atom in [b.begin, b.end] {
                if atom >= n {
                    return Err(GraphError::EndpointOutOfRange {
                        bond: i,
                        atom,
                        num_atoms: n,
                    });
                }
            }
            if b.begin == b.end {
                return Err(GraphError::SelfLoop { bond: i, atom: b.begin });
            }
            let pair = (b.begin.min(b.end), b.begin.max(b.end));
            if !seen.insert(pair) {
                return Err(GraphError::DuplicateBond(pair.0, pair.1));
            }
        }
        for a in atoms.iter_mut() {
            a.degree = 0;
        }
        for b in &bonds {
            atoms[b.begin].degree += 1;
            atoms[b.end].degree += 1;
        }
        let mut graph = MolGraph {
            atoms,
            bonds: Vec::new(),
            num_components: 0,
            canonical_key: String::new(),
        };
        std::mem::swap(&mut graph.bonds, &mut bonds);
        let flags = ring_membership(&graph);
        for (a, f) in graph.atoms.iter_mut().zip(&flags.atoms) {
            a.in_ring = *f;
        }
        for (b, f) in graph.bonds.iter_mut().zip(&flags.bonds) {
            b.in_ring = *f;
        }
        graph.num_components = count_components(graph.num_atoms(), &graph.bonds).max(1);
        graph.canonical_key = canonical_key(&graph);
        Ok(graph)
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Per-atom neighbor lists of `(neighbor, bond index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.num_atoms()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.begin].push((b.end, i));
            adj[b.end].push((b.begin, i));
        }
        adj
    }

    /// Undirected edge list as `(begin, end)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(|b| (b.begin, b.end)).collect()
    }

    /// Sum of bond valence contributions at `atom`, in half-units.
    pub fn bond_half_valence(&self, atom: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.begin == atom || b.end == atom)
            .map(|b| b.order.half_valence())
            .sum()
    }

    pub fn cycle_rank(&self) -> usize {
        (self.num_bonds() + self.num_components).saturating_sub(self.num_atoms())
    }

    /// Reorders atoms so that new atom `i` is old atom `order[i]`. Bonds are
    /// remapped and sorted by their new endpoint pair.
    pub fn permuted(&self, order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.num_atoms(), "permutation length mismatch");
        let mut new_index = vec![usize::MAX; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let atoms: Vec<Atom> = order.iter().map(|&old| self.atoms[old].clone()).collect();
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| {
                let (u, v) = (new_index[b.begin], new_index[b.end]);
                Bond {
                    begin: u.min(v),
                    end: u.max(v),
                    order: b.order,
                    in_ring: b.in_ring,
                }
            })
            .collect();
        bonds.sort_by_key(|b| (b.begin, b.end));
        MolGraph {
            atoms,
            bonds,
            num_components: self.num_components,
            canonical_key: self.canonical_key.clone(),
        }
    }

    /// The same molecule with atoms in canonical order.
    pub fn canonicalized(&self) -> MolGraph {
        let form = canonical_form(self);
        self.permuted(&form.order)
    }
}

fn count_components(n: usize, bonds: &[Bond]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for b in bonds {
        let (ra, rb) = (find(&mut parent, b.begin), find(&mut parent, b.end));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components
}
