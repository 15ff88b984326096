use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{Atom, BondOrder, MolecularGraph};

/// Writes `g` as SMILES. Not canonical: traversal starts from the lowest
/// atom index of each fragment and visits neighbors in index order.
pub fn serialize_smiles(g: &MolecularGraph) -> String {
    serialize_smiles_with_order(g).0
}

/// Like [`serialize_smiles`], also returning the emitted atom order
/// (`order[k]` is the source index of the k-th atom in the output).
pub fn serialize_smiles_with_order(g: &MolecularGraph) -> (String, Vec<usize>) {
    let n = g.atom_count();
    let plan = plan_traversal(g);
    let mut w = Writer {
        g,
        plan: &plan,
        out: String::new(),
        order: Vec::with_capacity(n),
        digit_of_bond: vec![None; g.bond_count()],
        free_digits: (1..100).collect(),
    };
    for (k, &root) in plan.roots.iter().enumerate() {
        if k > 0 {
            w.out.push('.');
        }
        w.emit(root);
    }
    (w.out, w.order)
}

struct Plan {
    roots: Vec<usize>,
    /// Tree children per atom as (child, bond), in visit order.
    children: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds touching each atom, in the order they are written.
    ring_bonds: Vec<Vec<usize>>,
}

fn plan_traversal(g: &MolecularGraph) -> Plan {
    let n = g.atom_count();
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; g.bond_count()];
    let mut children = vec![Vec::new(); n];
    let mut ring_bonds = vec![Vec::new(); n];
    let mut roots = Vec::new();

    for root in 0..n {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        // explicit stack of (atom, next neighbor cursor)
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut cursor)) = stack.last_mut() {
            let nbrs = g.neighbors(v);
            if *cursor >= nbrs.len() {
                stack.pop();
                continue;
            }
            let (u, bond) = nbrs[*cursor];
            *cursor += 1;
            if bond_used[bond] {
                continue;
            }
            bond_used[bond] = true;
            if visited[u] {
                ring_bonds[u].push(bond);
                ring_bonds[v].push(bond);
            } else {
                visited[u] = true;
                children[v].push((u, bond));
                stack.push((u, 0));
            }
        }
    }
    Plan {
        roots,
        children,
        ring_bonds,
    }
}

struct Writer<'a> {
    g: &'a MolecularGraph,
    plan: &'a Plan,
    out: String,
    order: Vec<usize>,
    digit_of_bond: Vec<Option<u32>>,
    free_digits: BTreeSet<u32>,
}

impl Writer<'_> {
    fn emit(&mut self, root: usize) {
        // (atom, incoming bond, opens a branch, closes a branch)
        enum Step {
            Atom(usize, Option<usize>),
            Open,
            Close,
        }
        let mut stack = vec![Step::Atom(root, None)];
        while let Some(step) = stack.pop() {
            match step {
                Step::Open => self.out.push('('),
                Step::Close => self.out.push(')'),
                Step::Atom(v, incoming) => {
                    if let Some(bond) = incoming {
                        self.write_bond(bond);
                    }
                    self.write_atom(v);
                    self.write_ring_digits(v);
                    let kids = &self.plan.children[v];
                    // pushed in reverse so the first child is emitted first
                    for (k, &(child, bond)) in kids.iter().enumerate().rev() {
                        if k + 1 < kids.len() {
                            stack.push(Step::Close);
                            stack.push(Step::Atom(child, Some(bond)));
                            stack.push(Step::Open);
                        } else {
                            stack.push(Step::Atom(child, Some(bond)));
                        }
                    }
                }
            }
        }
    }

    fn write_ring_digits(&mut self, v: usize) {
        for &bond in &self.plan.ring_bonds[v] {
            match self.digit_of_bond[bond].take() {
                Some(d) => {
                    self.write_bond(bond);
                    push_digit(&mut self.out, d);
                    self.free_digits.insert(d);
                }
                None => {
                    let d = self
                        .free_digits
                        .pop_first()
                        .expect("more than 99 simultaneously open rings");
                    self.digit_of_bond[bond] = Some(d);
                    push_digit(&mut self.out, d);
                }
            }
        }
    }

    fn write_bond(&mut self, bond: usize) {
        let b = self.g.bonds()[bond];
        let both_aromatic = self.g.atom(b.a).aromatic && self.g.atom(b.b).aromatic;
        let implied = if both_aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        };
        if b.order != implied {
            self.out.push(b.order.symbol());
        }
    }

    fn write_atom(&mut self, v: usize) {
        self.order.push(v);
        let atom = self.g.atom(v);
        if can_write_bare(atom, self.g.half_valence(v)) {
            push_symbol(&mut self.out, atom);
            return;
        }
        self.out.push('[');
        push_symbol(&mut self.out, atom);
        match atom.implicit_h {
            0 => {}
            1 => self.out.push('H'),
            h => {
                let _ = write!(self.out, "H{h}");
            }
        }
        match atom.formal_charge {
            0 => {}
            1 => self.out.push('+'),
            -1 => self.out.push('-'),
            c if c > 0 => {
                let _ = write!(self.out, "+{c}");
            }
            c => {
                let _ = write!(self.out, "-{}", -c);
            }
        }
        if let Some(m) = atom.map_num {
            let _ = write!(self.out, ":{m}");
        }
        self.out.push(']');
    }
}

fn can_write_bare(atom: &Atom, half_valence: u32) -> bool {
    atom.element.is_organic_subset()
        && atom.formal_charge == 0
        && atom.map_num.is_none()
        && atom.implicit_h == atom.element.implicit_hydrogens(half_valence)
        && (!atom.aromatic || atom.element.can_be_aromatic())
}

fn push_symbol(out: &mut String, atom: &Atom) {
    if atom.aromatic {
        out.push_str(&atom.element.symbol().to_ascii_lowercase());
    } else {
        out.push_str(atom.element.symbol());
    }
}

fn push_digit(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from_digit(d, 10).unwrap());
    } else {
        let _ = write!(out, "%{d:02}");
    }
}
