use std::collections::HashMap;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("ring closure {label} opened at position {pos} is never closed")]
    UnmatchedRing { label: u32, pos: usize },
    #[error("unsupported element '{symbol}' at position {pos}")]
    UnsupportedElement { symbol: String, pos: usize },
    #[error("unsupported feature at position {pos}: {what}")]
    Unsupported { pos: usize, what: String },
    #[error("valence overflow on atom {atom} ({element}): bond order sum {bond_sum} exceeds {max}")]
    ValenceOverflow {
        atom: usize,
        element: Element,
        bond_sum: f64,
        max: u32,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct ParsedAtom {
    atom: Atom,
    /// Explicit hydrogen count for bracket atoms; `None` for organic-subset atoms.
    bracket_h: Option<u8>,
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSymbol>,
    pos: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    bonds: Vec<(usize, usize, BondOrder)>,
}

/// Parses a SMILES string into a [`MolGraph`].
///
/// Supported: organic-subset and bracket atoms (charge, H count), aromatic
/// lowercase atoms, branches, ring closures (`1`..`9`, `%nn`), bond symbols
/// `- = # :` and `.` for disconnected fragments. Stereo marks (`/ \ @`) are
/// accepted and dropped. Isotopes, wildcards, atom classes and reaction
/// syntax are rejected. Explicit `[H]` atoms bound to a heavy atom are folded
/// into that atom's hydrogen count.
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
    };
    p.parse()?;
    p.finish()
}

impl<'a> Parser<'a> {
    fn syntax<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T, SmilesError> {
        Err(SmilesError::Syntax { pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn parse(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSymbol, usize)> = None;
        let mut branches: Vec<usize> = Vec::new();
        let mut rings: HashMap<u32, RingOpen> = HashMap::new();

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return self.syntax(start, "branch without a preceding atom");
                    };
                    if pending.is_some() {
                        return self.syntax(start, "bond symbol before '('");
                    }
                    branches.push(p);
                    self.pos += 1;
                }
                b')' => {
                    let Some(p) = branches.pop() else {
                        return self.syntax(start, "unbalanced ')'");
                    };
                    if pending.is_some() {
                        return self.syntax(start, "dangling bond symbol before ')'");
                    }
                    prev = Some(p);
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() {
                        return self.syntax(start, "bond symbol before '.'");
                    }
                    if prev.is_none() {
                        return self.syntax(start, "'.' without a preceding atom");
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() {
                        return self.syntax(start, "consecutive bond symbols");
                    }
                    if prev.is_none() {
                        return self.syntax(start, "bond symbol without a preceding atom");
                    }
                    let sym = match c {
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        _ => BondSymbol::Single,
                    };
                    pending = Some((sym, start));
                    self.pos += 1;
                }
                b'$' => {
                    return Err(SmilesError::Unsupported {
                        pos: start,
                        what: "quadruple bond".into(),
                    })
                }
                b'>' => {
                    return Err(SmilesError::Unsupported {
                        pos: start,
                        what: "reaction syntax".into(),
                    })
                }
                b'*' => {
                    return Err(SmilesError::Unsupported {
                        pos: start,
                        what: "wildcard atom".into(),
                    })
                }
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return self.syntax(start, "ring closure without a preceding atom");
                    };
                    let label = self.ring_label()?;
                    let bond = pending.take().map(|(s, _)| s);
                    match rings.remove(&label) {
                        Some(open) => {
                            if open.atom == p {
                                return self.syntax(start, "ring closure joins an atom to itself");
                            }
                            let sym = match (open.bond, bond) {
                                (Some(a), Some(b)) if a != b => {
                                    return self.syntax(start, "conflicting ring-closure bond symbols")
                                }
                                (a, b) => a.or(b),
                            };
                            self.add_bond(open.atom, p, sym, start)?;
                        }
                        None => {
                            rings.insert(label, RingOpen { atom: p, bond, pos: start });
                        }
                    }
                }
                _ => {
                    let atom = self.parse_atom()?;
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    if let Some(p) = prev {
                        let sym = pending.take().map(|(s, _)| s);
                        self.add_bond(p, idx, sym, start)?;
                    } else if let Some((_, pos)) = pending {
                        return self.syntax(pos, "bond symbol without a preceding atom");
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some((_, pos)) = pending {
            return self.syntax(pos, "dangling bond symbol at end of input");
        }
        if !branches.is_empty() {
            return self.syntax(self.text.len(), "unclosed branch '('");
        }
        if let Some((&label, open)) = rings.iter().min_by_key(|(_, o)| o.pos) {
            return Err(SmilesError::UnmatchedRing { label, pos: open.pos });
        }
        if prev.is_none() && !self.atoms.is_empty() {
            return self.syntax(self.text.len(), "trailing '.'");
        }
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, SmilesError> {
        let start = self.pos;
        if self.peek() == Some(b'%') {
            self.pos += 1;
            let digits = self.text.get(self.pos..self.pos + 2);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 2;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => self.syntax(start, "'%' must be followed by two digits"),
            }
        } else {
            let d = self.text[self.pos] - b'0';
            self.pos += 1;
            Ok(d as u32)
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        sym: Option<BondSymbol>,
        pos: usize,
    ) -> Result<(), SmilesError> {
        let order = match sym {
            Some(s) => s.order(),
            None if self.atoms[a].atom.aromatic && self.atoms[b].atom.aromatic => {
                BondOrder::Aromatic
            }
            None => BondOrder::Single,
        };
        let (lo, hi) = (a.min(b), a.max(b));
        if self
            .bonds
            .iter()
            .any(|&(x, y, _)| (x.min(y), x.max(y)) == (lo, hi))
        {
            return self.syntax(pos, format!("atoms {lo} and {hi} bonded twice"));
        }
        self.bonds.push((a, b, order));
        Ok(())
    }

    fn parse_atom(&mut self) -> Result<ParsedAtom, SmilesError> {
        let start = self.pos;
        let c = self.text[self.pos];
        if c == b'[' {
            return self.parse_bracket();
        }
        let two = self.text.get(self.pos..self.pos + 2);
        let (symbol, aromatic, len) = match (c, two) {
            (b'C', Some(b"Cl")) => ("Cl", false, 2),
            (b'B', Some(b"Br")) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            (c, _) if c.is_ascii_alphabetic() => {
                let end = self.text[self.pos + 1..]
                    .iter()
                    .position(|b| !b.is_ascii_lowercase())
                    .map_or(self.text.len(), |p| self.pos + 1 + p)
                    .min(self.pos + 2);
                let symbol = String::from_utf8_lossy(&self.text[self.pos..end]).into_owned();
                return Err(SmilesError::UnsupportedElement { symbol, pos: start });
            }
            _ => return self.syntax(start, format!("unexpected character '{}'", c as char)),
        };
        self.pos += len;
        let element = Element::from_symbol(symbol).expect("organic subset is in the table");
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(ParsedAtom { atom, bracket_h: None })
    }

    fn parse_bracket(&mut self) -> Result<ParsedAtom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(SmilesError::Unsupported {
                pos: self.pos,
                what: "isotope".into(),
            });
        }
        let sym_start = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(b'*') => {
                return Err(SmilesError::Unsupported {
                    pos: sym_start,
                    what: "wildcard atom".into(),
                })
            }
            Some(c) if c.is_ascii_uppercase() => {
                let two = self
                    .text
                    .get(self.pos..self.pos + 2)
                    .filter(|t| t[1].is_ascii_lowercase())
                    .and_then(|t| std::str::from_utf8(t).ok())
                    .and_then(Element::from_symbol);
                if let Some(el) = two {
                    self.pos += 2;
                    (el, false)
                } else {
                    let one = std::str::from_utf8(&self.text[self.pos..self.pos + 1])
                        .ok()
                        .and_then(Element::from_symbol);
                    match one {
                        Some(el) => {
                            self.pos += 1;
                            (el, false)
                        }
                        None => {
                            let end = if self
                                .text
                                .get(self.pos + 1)
                                .is_some_and(|c| c.is_ascii_lowercase())
                            {
                                self.pos + 2
                            } else {
                                self.pos + 1
                            };
                            return Err(SmilesError::UnsupportedElement {
                                symbol: String::from_utf8_lossy(&self.text[self.pos..end])
                                    .into_owned(),
                                pos: sym_start,
                            });
                        }
                    }
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                let two = self.text.get(self.pos..self.pos + 2);
                let (sym, len) = match two {
                    Some(b"se") => ("Se", 2),
                    Some(b"as") => ("As", 2),
                    Some(b"te") => ("Te", 2),
                    _ => match c {
                        b'b' => ("B", 1),
                        b'c' => ("C", 1),
                        b'n' => ("N", 1),
                        b'o' => ("O", 1),
                        b'p' => ("P", 1),
                        b's' => ("S", 1),
                        _ => {
                            return Err(SmilesError::UnsupportedElement {
                                symbol: (c as char).to_string(),
                                pos: sym_start,
                            })
                        }
                    },
                };
                self.pos += len;
                (Element::from_symbol(sym).expect("aromatic symbols are in the table"), true)
            }
            _ => return self.syntax(sym_start, "expected element symbol in bracket atom"),
        };

        // Chirality marks are dropped: '@', '@@', and optional class tags
        // such as '@TH1' or '@OH12'.
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else {
                while self.peek().is_some_and(|c| c.is_ascii_uppercase()) {
                    self.pos += 1;
                }
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }

        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            h = 1;
            if let Some(c) = self.peek().filter(u8::is_ascii_digit) {
                h = c - b'0';
                self.pos += 1;
            }
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(c) = self.peek().filter(u8::is_ascii_digit) {
                let mut mag = (c - b'0') as i32;
                self.pos += 1;
                if let Some(c2) = self.peek().filter(u8::is_ascii_digit) {
                    mag = mag * 10 + (c2 - b'0') as i32;
                    self.pos += 1;
                }
                charge = unit * mag;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        if !(-15..=15).contains(&charge) {
            return self.syntax(open, "formal charge out of range");
        }

        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b':') => {
                return Err(SmilesError::Unsupported {
                    pos: self.pos,
                    what: "atom class".into(),
                })
            }
            _ => return self.syntax(self.pos, "expected ']'"),
        }

        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        atom.formal_charge = charge as i8;
        Ok(ParsedAtom { atom, bracket_h: Some(h) })
    }

    fn finish(self) -> Result<MolGraph, SmilesError> {
        let Parser { atoms, bonds, .. } = self;
        let n = atoms.len();
        let mut half_sum = vec![0u32; n];
        let mut bond_count = vec![0usize; n];
        for &(a, b, order) in &bonds {
            half_sum[a] += order.half_valence();
            half_sum[b] += order.half_valence();
            bond_count[a] += 1;
            bond_count[b] += 1;
        }

        // Hydrogen atoms written explicitly as [H] and bonded to one heavy atom
        // are folded into that atom's hydrogen count.
        let folded: Vec<bool> = (0..n)
            .map(|i| {
                atoms[i].atom.element == Element::H
                    && atoms[i].atom.formal_charge == 0
                    && atoms[i].bracket_h == Some(0)
                    && bond_count[i] == 1
                    && bonds.iter().any(|&(a, b, o)| {
                        o == BondOrder::Single
                            && ((a == i && atoms[b].atom.element != Element::H)
                                || (b == i && atoms[a].atom.element != Element::H))
                    })
            })
            .collect();
        let mut extra_h = vec![0u8; n];
        for &(a, b, _) in &bonds {
            if folded[a] {
                extra_h[b] += 1;
            } else if folded[b] {
                extra_h[a] += 1;
            }
        }

        let mut out_atoms = Vec::with_capacity(n);
        let mut new_index = vec![usize::MAX; n];
        for (i, pa) in atoms.into_iter().enumerate() {
            if folded[i] {
                continue;
            }
            let ParsedAtom { mut atom, bracket_h } = pa;
            let element = atom.element;
            match bracket_h {
                None => {
                    // Organic subset: fill up to the smallest fitting valence.
                    let Some(h) = element.implicit_hydrogens(atom.aromatic, half_sum[i]) else {
                        return Err(SmilesError::ValenceOverflow {
                            atom: out_atoms.len(),
                            element,
                            bond_sum: half_sum[i] as f64 / 2.0,
                            max: element.max_valence().unwrap_or(0),
                        });
                    };
                    // Folded [H] neighbors already count toward the bond sum.
                    atom.implicit_h = h as u8 + extra_h[i];
                }
                Some(h) => {
                    // Aromatic bracket atoms are trusted as written.
                    if let Some(max) = element.max_valence().filter(|_| !atom.aromatic) {
                        let allowed = max + atom.formal_charge.unsigned_abs() as u32;
                        let used = half_sum[i].div_ceil(2) + h as u32;
                        if used > allowed {
                            return Err(SmilesError::ValenceOverflow {
                                atom: out_atoms.len(),
                                element,
                                bond_sum: half_sum[i] as f64 / 2.0 + h as f64,
                                max: allowed,
                            });
                        }
                    }
                    atom.implicit_h = h + extra_h[i];
                }
            }
            new_index[i] = out_atoms.len();
            out_atoms.push(atom);
        }

        let out_bonds = bonds
            .into_iter()
            .filter(|&(a, b, _)| !folded[a] && !folded[b])
            .map(|(a, b, order)| Bond {
                begin: new_index[a],
                end: new_index[b],
                order,
                in_ring: false,
            })
            .collect();
        Ok(MolGraph::from_parts(out_atoms, out_bonds)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h_counts(g: &MolGraph) -> Vec<u8> {
        g.atoms.iter().map(|a| a.implicit_h).collect()
    }

    #[test]
    fn ethanol() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.num_atoms(), 3);
        assert_eq!(g.num_bonds(), 2);
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(h_counts(&g), vec![3, 2, 1]);
    }

    #[test]
    fn benzene() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.num_atoms(), 6);
        assert_eq!(g.num_bonds(), 6);
        assert!(g.atoms.iter().all(|a| a.aromatic && a.in_ring && a.implicit_h == 1));
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Aromatic && b.in_ring));
    }

    #[test]
    fn disconnected() {
        let g = parse_smiles("C1CC1.O").unwrap();
        assert_eq!((g.num_atoms(), g.num_bonds(), g.num_components), (4, 3, 2));
    }

    #[test]
    fn brackets_charges_and_h() {
        let g = parse_smiles("[NH4+].[O-]C(=O)C").unwrap();
        assert_eq!(g.atoms[0].formal_charge, 1);
        assert_eq!(g.atoms[0].implicit_h, 4);
        assert_eq!(g.atoms[1].formal_charge, -1);
        assert_eq!(g.atoms[1].implicit_h, 0);
        let g = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(g.atoms[0].formal_charge, 3);
        let g = parse_smiles("[Cu+2]").unwrap();
        assert_eq!(g.atoms[0].formal_charge, 2);
        let g = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(g.atoms[3].implicit_h, 1);
        assert!(g.atoms[3].aromatic);
    }

    #[test]
    fn stereo_is_dropped() {
        let a = parse_smiles("F/C=C/F").unwrap();
        let b = parse_smiles("FC=CF").unwrap();
        assert_eq!(a.canonical_key, b.canonical_key);
        let c = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        let d = parse_smiles("NC(C)C(=O)O").unwrap();
        assert_eq!(c.canonical_key, d.canonical_key);
        assert_eq!(c.atoms[1].implicit_h, 1);
    }

    #[test]
    fn percent_ring_labels_and_ring_bond_symbols() {
        let g = parse_smiles("C%12CCCC%12").unwrap();
        assert_eq!(g.num_bonds(), 5);
        let g = parse_smiles("C=1CCCC1").unwrap();
        assert_eq!(g.bonds.iter().filter(|b| b.order == BondOrder::Double).count(), 1);
        assert_eq!(g.atoms[0].implicit_h, 1);
    }

    #[test]
    fn aromatic_valence_clamps() {
        let g = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(g.atoms[3].implicit_h, 0);
        assert_eq!(g.atoms[0].implicit_h, 1);
        let g = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(g.atoms[3].implicit_h, 0);
        let g = parse_smiles("Cn1cccc1").unwrap();
        assert_eq!(g.atoms[1].implicit_h, 0);
        let g = parse_smiles("c1ccncc1").unwrap();
        assert_eq!(g.atoms[3].implicit_h, 0);
    }

    #[test]
    fn multi_valence_elements() {
        let g = parse_smiles("CS(=O)(=O)C").unwrap();
        assert_eq!(g.atoms[1].implicit_h, 0);
        let g = parse_smiles("OP(=O)(O)O").unwrap();
        assert_eq!(g.atoms[1].implicit_h, 0);
        let g = parse_smiles("CS").unwrap();
        assert_eq!(g.atoms[1].implicit_h, 1);
    }

    #[test]
    fn explicit_hydrogens_fold() {
        let g = parse_smiles("[H]C([H])([H])[H]").unwrap();
        assert_eq!(g.num_atoms(), 1);
        assert_eq!(g.atoms[0].implicit_h, 4);
        let g = parse_smiles("[H][H]").unwrap();
        assert_eq!(g.num_atoms(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_smiles(""), Err(SmilesError::Empty));
        assert!(matches!(parse_smiles("C1CC"), Err(SmilesError::UnmatchedRing { label: 1, .. })));
        assert!(matches!(parse_smiles("CC(C"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse_smiles("CC)C"), Err(SmilesError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_smiles("C=)"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(
            parse_smiles("[Xe]"),
            Err(SmilesError::UnsupportedElement { .. })
        ));
        assert!(matches!(
            parse_smiles("CX"),
            Err(SmilesError::UnsupportedElement { pos: 1, .. })
        ));
        assert!(matches!(parse_smiles("[13C]"), Err(SmilesError::Unsupported { .. })));
        assert!(matches!(parse_smiles("C*"), Err(SmilesError::Unsupported { .. })));
        assert!(matches!(parse_smiles("CC>>CC"), Err(SmilesError::Unsupported { .. })));
        assert!(matches!(
            parse_smiles("C(=C)(=C)=C=C"),
            Err(SmilesError::ValenceOverflow { .. })
        ));
        assert!(matches!(parse_smiles("FF(F)"), Err(SmilesError::ValenceOverflow { .. })));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse_smiles("C12CC12"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse_smiles("C."), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse_smiles("[C"), Err(SmilesError::Syntax { .. })));
    }
}
