use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

struct ElementInfo {
    symbol: &'static str,
    /// Default valences for organic-subset atoms; empty for everything else.
    valences: &'static [u32],
    /// May be written lowercase (aromatic) in SMILES.
    aromatic_ok: bool,
}

macro_rules! elements {
    ($( ($sym:literal, [$($v:literal),*], $arom:literal) ),* $(,)?) => {
        const TABLE: &[ElementInfo] = &[
            $( ElementInfo { symbol: $sym, valences: &[$($v),*], aromatic_ok: $arom } ),*
        ];
        /// Every element symbol accepted by the parser.
        pub const SUPPORTED_ELEMENTS: &[&str] = &[$($sym),*];
    };
}

elements![
    ("H", [], false),
    ("Li", [], false),
    ("B", [3], true),
    ("C", [4], true),
    ("N", [3, 5], true),
    ("O", [2], true),
    ("F", [1], false),
    ("Na", [], false),
    ("Mg", [], false),
    ("Al", [], false),
    ("Si", [], false),
    ("P", [3, 5], true),
    ("S", [2, 4, 6], true),
    ("Cl", [1], false),
    ("K", [], false),
    ("Ca", [], false),
    ("Mn", [], false),
    ("Fe", [], false),
    ("Co", [], false),
    ("Ni", [], false),
    ("Cu", [], false),
    ("Zn", [], false),
    ("Ge", [], false),
    ("As", [], true),
    ("Se", [], true),
    ("Br", [1], false),
    ("Rh", [], false),
    ("Pd", [], false),
    ("Ag", [], false),
    ("Sn", [], false),
    ("Te", [], true),
    ("I", [1], false),
    ("Cs", [], false),
    ("Pt", [], false),
    ("Au", [], false),
    ("Hg", [], false),
];

/// A chemical element from the supported set.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Element(u8);

impl Element {
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        TABLE
            .iter()
            .position(|e| e.symbol == symbol)
            .map(|i| Element(i as u8))
    }

    /// Index into the supported-element table.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn count() -> usize {
        TABLE.len()
    }

    pub fn symbol(self) -> &'static str {
        TABLE[self.0 as usize].symbol
    }

    /// True for B, C, N, O, P, S, F, Cl, Br, I.
    pub fn is_organic_subset(self) -> bool {
        !TABLE[self.0 as usize].valences.is_empty()
    }

    pub fn can_be_aromatic(self) -> bool {
        TABLE[self.0 as usize].aromatic_ok
    }

    /// Implicit hydrogens for an unbracketed atom with the given bond-order sum.
    ///
    /// Aromatic bonds count 1.5 and the total is rounded down, then the
    /// smallest default valence not below the total is filled.
    pub fn implicit_hydrogens(self, half_valence: u32) -> u8 {
        let used = half_valence / 2;
        TABLE[self.0 as usize]
            .valences
            .iter()
            .find(|&&v| v >= used)
            .map_or(0, |&v| (v - used) as u8)
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl Serialize for Element {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let sym = String::deserialize(d)?;
        Element::from_symbol(&sym)
            .ok_or_else(|| serde::de::Error::custom(format!("unsupported element {sym:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valence_fill() {
        let c = Element::from_symbol("C").unwrap();
        assert_eq!(c.implicit_hydrogens(0), 4);
        assert_eq!(c.implicit_hydrogens(6), 1); // two aromatic bonds
        assert_eq!(c.implicit_hydrogens(9), 0); // fused aromatic carbon
        assert_eq!(c.implicit_hydrogens(10), 0);
        let n = Element::from_symbol("N").unwrap();
        assert_eq!(n.implicit_hydrogens(8), 1); // picks valence 5
        let s = Element::from_symbol("S").unwrap();
        assert_eq!(s.implicit_hydrogens(6), 1);
    }

    #[test]
    fn symbols_round_trip() {
        for sym in SUPPORTED_ELEMENTS {
            assert_eq!(Element::from_symbol(sym).unwrap().symbol(), *sym);
        }
        assert!(Element::from_symbol("Xx").is_none());
    }
}
