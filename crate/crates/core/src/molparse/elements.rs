use std::fmt;

/// Static per-element data used by the parser, featurizer and descriptors.
#[derive(Debug)]
pub struct ElementInfo {
    pub symbol: &'static str,
    pub atomic_number: u8,
    /// Standard atomic weight (g/mol).
    pub mass: f64,
    /// Allowed default valences in ascending order. Empty for elements that
    /// only ever appear in brackets (metals, noble gases).
    pub valences: &'static [u8],
    /// Member of the SMILES organic subset (writable without brackets).
    pub organic: bool,
    /// May be written in lowercase aromatic form.
    pub aromatic: bool,
}

macro_rules! el {
    ($sym:literal, $z:literal, $mass:literal, [$($v:literal),*], $org:literal, $aro:literal) => {
        ElementInfo {
            symbol: $sym,
            atomic_number: $z,
            mass: $mass,
            valences: &[$($v),*],
            organic: $org,
            aromatic: $aro,
        }
    };
}

static TABLE: &[ElementInfo] = &[
    el!("H", 1, 1.008, [1], false, false),
    el!("Li", 3, 6.94, [], false, false),
    el!("B", 5, 10.81, [3], true, true),
    el!("C", 6, 12.011, [4], true, true),
    el!("N", 7, 14.007, [3], true, true),
    el!("O", 8, 15.999, [2], true, true),
    el!("F", 9, 18.998, [1], true, false),
    el!("Na", 11, 22.990, [], false, false),
    el!("Mg", 12, 24.305, [], false, false),
    el!("Al", 13, 26.982, [], false, false),
    el!("Si", 14, 28.085, [4], false, false),
    el!("P", 15, 30.974, [3, 5], true, true),
    el!("S", 16, 32.06, [2, 4, 6], true, true),
    el!("Cl", 17, 35.45, [1], true, false),
    el!("K", 19, 39.098, [], false, false),
    el!("Ca", 20, 40.078, [], false, false),
    el!("Ti", 22, 47.867, [], false, false),
    el!("Cr", 24, 51.996, [], false, false),
    el!("Mn", 25, 54.938, [], false, false),
    el!("Fe", 26, 55.845, [], false, false),
    el!("Co", 27, 58.933, [], false, false),
    el!("Ni", 28, 58.693, [], false, false),
    el!("Cu", 29, 63.546, [], false, false),
    el!("Zn", 30, 65.38, [], false, false),
    el!("Ge", 32, 72.630, [4], false, false),
    el!("As", 33, 74.922, [3, 5], false, true),
    el!("Se", 34, 78.971, [2, 4, 6], false, true),
    el!("Br", 35, 79.904, [1], true, false),
    el!("Ag", 47, 107.87, [], false, false),
    el!("Sn", 50, 118.71, [], false, false),
    el!("Te", 52, 127.60, [2, 4, 6], false, true),
    el!("I", 53, 126.90, [1], true, false),
    el!("Ba", 56, 137.33, [], false, false),
    el!("Pt", 78, 195.08, [], false, false),
    el!("Au", 79, 196.97, [], false, false),
    el!("Hg", 80, 200.59, [], false, false),
    el!("Pb", 82, 207.2, [], false, false),
];

/// A supported chemical element, identified by its atomic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element(u8);

impl Element {
    pub const H: Element = Element(1);
    pub const C: Element = Element(6);
    pub const N: Element = Element(7);
    pub const O: Element = Element(8);

    pub fn from_symbol(symbol: &str) -> Option<Element> {
        TABLE
            .iter()
            .find(|e| e.symbol == symbol)
            .map(|e| Element(e.atomic_number))
    }

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        TABLE.iter().any(|e| e.atomic_number == z).then_some(Element(z))
    }

    pub fn info(self) -> &'static ElementInfo {
        TABLE
            .iter()
            .find(|e| e.atomic_number == self.0)
            .expect("Element values are only constructed from the table")
    }

    pub fn atomic_number(self) -> u8 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        self.info().symbol
    }

    pub fn mass(self) -> f64 {
        self.info().mass
    }

    /// Smallest allowed valence that accommodates `bond_sum`, if any.
    pub fn default_valence(self, bond_sum: u32) -> Option<u32> {
        self.info()
            .valences
            .iter()
            .map(|&v| v as u32)
            .find(|&v| v >= bond_sum)
    }

    /// Implicit hydrogens for an unbracketed atom whose bonds sum to
    /// `half_sum` half-units. Aromatic atoms use their lowest valence and are
    /// clamped at zero; `None` means the bonds exceed every allowed valence.
    pub fn implicit_hydrogens(self, aromatic: bool, half_sum: u32) -> Option<u32> {
        let used = half_sum.div_ceil(2);
        if aromatic {
            let lowest = *self.info().valences.first()? as u32;
            return Some(lowest.saturating_sub(used));
        }
        self.default_valence(used).map(|v| v - used)
    }

    pub fn max_valence(self) -> Option<u32> {
        self.info().valences.last().map(|&v| v as u32)
    }

    pub fn all() -> impl Iterator<Item = Element> {
        TABLE.iter().map(|e| Element(e.atomic_number))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
