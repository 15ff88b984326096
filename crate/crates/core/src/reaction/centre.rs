use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{ReactionError, ReactionRecord};
use crate::chemgraph::{BondOrder, MolecularGraph};

/// An atom pair whose bond differs between the mapped reactant and product graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CentrePair {
    /// Smaller map number.
    pub i: u32,
    pub j: u32,
    pub before: Option<BondOrder>,
    pub after: Option<BondOrder>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReactionCentre {
    /// Sorted by `(i, j)`.
    pub pairs: Vec<CentrePair>,
    pub centre_atoms: BTreeSet<u32>,
}

impl ReactionCentre {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

type BondTable = BTreeMap<(u32, u32), BondOrder>;

fn mapped_bonds(mols: &[MolecularGraph], keep: impl Fn(u32) -> bool) -> BondTable {
    let mut table = BTreeMap::new();
    for g in mols {
        for b in g.bonds() {
            let (Some(x), Some(y)) = (g.atom(b.a).map_num, g.atom(b.b).map_num) else {
                continue;
            };
            if keep(x) && keep(y) {
                table.insert((x.min(y), x.max(y)), b.order);
            }
        }
    }
    table
}

/// Diffs the mapped bond tables of the two sides.
///
/// The product table only covers atoms whose map numbers also occur among
/// the reactants. A reactant bond that has no counterpart in the products
/// (including every bond to an atom that leaves) is reported with
/// `after = None`. Unmapped atoms never take part.
pub fn detect_reaction_centre(record: &ReactionRecord) -> Result<ReactionCentre, ReactionError> {
    let reactant_maps: BTreeSet<u32> = record
        .reactants
        .iter()
        .flat_map(|g| g.atoms().iter().filter_map(|a| a.map_num))
        .collect();
    if reactant_maps.is_empty() {
        return Err(ReactionError::Unmappable);
    }
    let before = mapped_bonds(&record.reactants, |_| true);
    let after = mapped_bonds(&record.products, |m| reactant_maps.contains(&m));

    let keys: BTreeSet<(u32, u32)> = before.keys().chain(after.keys()).copied().collect();
    let mut centre = ReactionCentre::default();
    for (i, j) in keys {
        let b = before.get(&(i, j)).copied();
        let a = after.get(&(i, j)).copied();
        if b != a {
            centre.pairs.push(CentrePair {
                i,
                j,
                before: b,
                after: a,
            });
            centre.centre_atoms.insert(i);
            centre.centre_atoms.insert(j);
        }
    }
    debug_assert!(centre.pairs.iter().all(|p| p.before != p.after));
    debug_assert!(centre.centre_atoms.is_subset(&reactant_maps));
    Ok(centre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::parse_reaction;
    use BondOrder::*;

    fn pairs(line: &str) -> Vec<(u32, u32, Option<BondOrder>, Option<BondOrder>)> {
        let r = parse_reaction(line).unwrap();
        detect_reaction_centre(&r)
            .unwrap()
            .pairs
            .iter()
            .map(|p| (p.i, p.j, p.before, p.after))
            .collect()
    }

    #[test]
    fn identity_reaction_has_empty_centre() {
        assert!(pairs("[CH4:1]>>[CH4:1]").is_empty());
    }

    #[test]
    fn finkelstein() {
        let r = parse_reaction("[CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]").unwrap();
        let c = detect_reaction_centre(&r).unwrap();
        let got: Vec<_> = c.pairs.iter().map(|p| (p.i, p.j, p.before, p.after)).collect();
        assert_eq!(got, vec![(1, 2, Some(Single), None), (1, 3, None, Some(Single))]);
        assert_eq!(c.centre_atoms.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn esterification_leaving_group() {
        let got = pairs("[CH3:1][C:2](=[O:3])[OH:4].[CH3:5][OH:6]>>[CH3:1][C:2](=[O:3])[O:6][CH3:5]");
        assert_eq!(got, vec![(2, 4, Some(Single), None), (2, 6, None, Some(Single))]);
    }

    #[test]
    fn bond_order_change_and_charge_only_change() {
        let got = pairs("[CH3:1][C:2](=[O:3])[CH3:4]>>[CH3:1][CH:2]([OH:3])[CH3:4]");
        assert_eq!(got, vec![(2, 3, Some(Double), Some(Single))]);
        // protonation alone is not a graph edit
        assert!(pairs("[NH3:1]>>[NH4+:1]").is_empty());
    }

    #[test]
    fn unmapped_product_atoms_are_ignored() {
        let got = pairs("[CH3:1][OH:2]>>[CH3:1][O:2]C");
        assert!(got.is_empty());
    }

    #[test]
    fn unmappable() {
        let r = parse_reaction("CBr.[I-]>>CI.[Br-]").unwrap();
        assert_eq!(detect_reaction_centre(&r), Err(ReactionError::Unmappable));
    }
}
