#!/usr/bin/env python3
"""Regenerates the desk-scale fixtures under data/.

Everything is deterministic (fixed seed). Reactions are written from
templates in which only atoms at or next to the reaction centre carry
atom maps; the remaining atoms are plain organic-subset SMILES.
"""

import csv
import itertools
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
RNG = random.Random(20240521)

# ---------------------------------------------------------------- reactions

# (prefix, centre carbon with H count) for R-X; the centre carbon always has
# degree >= 2 so it never looks like the leaving halogen once masked.
ALKYL = [
    ("C", "CH2"),
    ("CC", "CH2"),
    ("CCC", "CH2"),
    ("CC(C)", "CH2"),
    ("CCCC", "CH2"),
    ("c1ccccc1", "CH2"),
    ("COC", "CH2"),
    ("CC(C)(C)", "CH2"),
    ("c1ccc(F)cc1", "CH2"),
    ("C1CCCC1", "CH2"),
    ("N#CC", "CH2"),
    ("CCOC(=O)", "CH2"),
    ("CCCCC", "CH2"),
]

# leaving halogen -> nucleophile (template with map 3 on the attacking atom, 4 on a neighbour)
NUCLEOPHILE = {
    "Cl": ("[C-:3]#[N:4]", "[C:3]#[N:4]"),
    "Br": ("[S-:3][CH3:4]", "[S:3][CH3:4]"),
    "I": ("[O-:3][CH3:4]", "[O:3][CH3:4]"),
}


def sn2(prefix, carbon, x):
    nu_r, nu_p = NUCLEOPHILE[x]
    return f"{prefix}[{carbon}:1][{x}:2].{nu_r}>>{prefix}[{carbon}:1]{nu_p}.[{x}-:2]"


ACYL = ["C", "CC", "c1ccccc1", "CC(C)"]
AMINE = [("C", "NH2"), ("CC", "NH2"), ("c1ccccc1", "NH2"), ("C1CC1", "NH2")]
ALCOHOL = [("C", "OH"), ("CC", "OH"), ("CCC", "OH"), ("CC(C)C", "OH")]


def amide(acyl, amine):
    pre, n = amine
    nh = "NH"
    return f"{acyl}[C:1](=[O:2])[Cl:3].{pre}[{n}:4]>>{acyl}[C:1](=[O:2])[{nh}:4]{pre}.[Cl-:3]"


def ester(acyl, alcohol):
    pre, o = alcohol
    return f"{acyl}[C:1](=[O:2])[OH:3].{pre}[{o}:4]>>{acyl}[C:1](=[O:2])[O:4]{pre}"


KETONES = [
    ("C", "C"),
    ("C", "CC"),
    ("CC", "CC"),
    ("C", "c1ccccc1"),
    ("C", "CCC"),
    ("CC", "c1ccccc1"),
    ("C", "CC(C)C"),
    ("C", "C1CC1"),
    ("CCC", "CCC"),
    ("C", "c1ccc(C)cc1"),
]


def reduction(a, b):
    return f"{a}[C:1](=[O:2]){b}>[BH4-].[Na+]>{a}[CH:1]([OH:2]){b}"


ARYL_BROMIDE = ["", "C", "F", "OC"]
BORONIC = ["", "C", "Cl", "C(F)(F)F"]


def aryl(sub, map_num, tail):
    # para-substituted benzene whose ipso carbon carries the map
    ring = f"[c:{map_num}]1ccc({sub})cc1" if sub else f"[c:{map_num}]1ccccc1"
    return ring if tail is None else ring + tail


def suzuki(a, b):
    ra = aryl(a, 1, "[Br:2]")
    rb = aryl(b, 3, "[B:4]([OH:5])[OH:6]")
    pa = f"[c:1]1ccc({a})cc1" if a else "[c:1]1ccccc1"
    pb = f"[c:3]2ccc({b})cc2" if b else "[c:3]2ccccc2"
    # product: biaryl with the new c1-c3 bond written as a branch
    prod = pa.replace("[c:1]1", "[c:1]1(" + pb + ")", 1)
    return f"{ra}.{rb}>[Pd]>{prod}"


def desk_corpus():
    out = []
    for prefix, carbon in ALKYL:
        for x in ("Cl", "Br", "I"):
            out.append(sn2(prefix, carbon, x))
    for acyl, am in itertools.product(ACYL, AMINE):
        out.append(amide(acyl, am))
    for acyl, al in itertools.product(ACYL, ALCOHOL):
        out.append(ester(acyl, al))
    for a, b in KETONES:
        out.append(reduction(a, b))
    for a, b in itertools.product(ARYL_BROMIDE, BORONIC):
        out.append(suzuki(a, b))
    return out


def centre_fixtures(desk):
    special = [
        # identity and no-change cases
        "[CH4:1]>>[CH4:1]",
        "[CH3:1][OH:2]>>[CH3:1][OH:2]",
        # substitution (Finkelstein)
        "[CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]",
        # condensation with a leaving hydroxyl
        "[CH3:1][C:2](=[O:3])[OH:4].[CH3:5][OH:6]>>[CH3:1][C:2](=[O:3])[O:6][CH3:5]",
        # bond order change only
        "[CH2:1]=[CH2:2].[H:3][H:4]>>[CH3:1][CH3:2]",
        "[CH:1]#[CH:2]>>[CH2:1]=[CH2:2]",
        # charge change without a bond change
        "[NH3:1].[Cl:2]>>[NH4+:1].[Cl-:2]",
        # cycloaddition: three order changes, two new bonds
        "[CH2:1]=[CH:2][CH:3]=[CH2:4].[CH2:5]=[CH2:6]>>[CH2:1]1[CH:2]=[CH:3][CH2:4][CH2:5][CH2:6]1",
        # three reactants, only one holds centre atoms besides the partner
        "[CH3:1][Br:2].[Na+:3].[OH-:4]>>[CH3:1][OH:4].[Na+:3].[Br-:2]",
        "CC[Br:1].[CH3:2][NH2:3].CCO>>CC[NH:3][CH3:2]",
        # ring opening
        "[CH2:1]1[CH2:2][O:3]1.[OH2:4]>>[OH:4][CH2:1][CH2:2][OH:3]",
        # unmapped product atoms
        "[CH3:1][OH:2]>>[CH3:1][O:2]C",
        # reagents present
        "[CH3:1][C:2](=[O:3])[CH3:4]>[BH4-].[Na+]>[CH3:1][CH:2]([OH:3])[CH3:4]",
        # aromatic substitution
        "[cH:1]1[cH:2][cH:3][cH:4][cH:5][cH:6]1.[Br:7][Br:8]>>[c:1]1([Br:7])[cH:2][cH:3][cH:4][cH:5][cH:6]1.[Br-:8]",
        # intramolecular ring closure
        "[CH3:1][CH2:2][CH2:3][CH2:4][CH2:5][Br:6]>>[CH2:1]1[CH2:2][CH2:3][CH2:4][CH2:5]1.[Br-:6]",
    ]
    picked = desk[::2]
    return special + picked


# ---------------------------------------------------------------- molecules

CORES = [
    "c1ccccc1*", "c1ccncc1*", "c1ccc2ccccc2c1*", "c1ccsc1*", "c1ccoc1*", "c1cc[nH]c1*",
    "C1CCCCC1*", "C1CCOC1*", "C1CCNCC1*", "C(=O)(O)*", "C(=O)N*", "C#C*", "C=C*", "N#C*",
    "[NH3+]C*", "[O-]C(=O)C*", "OC(*)C(=O)O", "c1ccc(cc1)c1ccccc1*", "C1CC1*",
    "c1cnc2ccccc2n1*", "F/C=C/*", "C[C@H](N)*", "O=S(=O)(*)C", "P(=O)(O)(O)*", "C1CCC2CCCCC2C1*",
]
SUBSTITUENTS = [
    "C", "CC", "CCC", "CC(C)C", "O", "OC", "N", "N(C)C", "F", "Cl", "Br", "I", "C(F)(F)F",
    "C(=O)C", "C#N", "[N+](=O)[O-]", "S", "SC", "c1ccccc1", "C1CC1",
]


def molecule_corpus():
    out = []
    for core, sub in itertools.product(CORES, SUBSTITUENTS):
        out.append(core.replace("*", sub))
    extras = [
        "C1CCCCCCCCC%10CCCCCCCCC1C%10",
        "[Na+].[Cl-]",
        "CC(=O)O.OCC",
        "[2H]C([2H])([2H])O",
        "N[C@@H](CC1=CC=CC=C1)C(=O)O",
        "[Fe+2]",
        "[Cu]",
        "[Pd]",
        "O=C=O",
        "C#N",
    ]
    return out + extras


def aromatic_count(smiles):
    """Counts aromatic atoms: lowercase organic atoms and bracket atoms whose symbol is lowercase."""
    n = 0
    i = 0
    while i < len(smiles):
        ch = smiles[i]
        if ch == "[":
            j = smiles.index("]", i)
            body = re.sub(r"^\d+", "", smiles[i + 1 : j])
            if body and body[0].islower():
                n += 1
            i = j + 1
            continue
        if ch in "bcnops":
            n += 1
        i += 1
    return n


AROMATIC_CORES = [
    "c1ccccc1", "c1ccncc1", "c1ccc2ccccc2c1", "c1ccsc1", "c1ccoc1", "c1cc[nH]c1",
    "c1ccc(cc1)-c1ccccc1", "c1cnc2ccccc2n1", "c1ccc2[nH]ccc2c1", "c1ccc2ccc3ccccc3c2c1",
]
ALIPHATIC_CORES = ["C1CCCCC1", "C1CCOC1", "C1CCNCC1", "CC(=O)O", "CCN", "C1CC1", "CC(C)(C)O"]
CHAINS = ["", "C", "CC", "CCC", "CCCC", "OC", "OCC", "CO", "CCO", "N", "CN", "Cl", "F", "C(=O)O", "CCCCC", "OCCO"]


def aromatic_dataset(n=500):
    rows = []
    cores = AROMATIC_CORES + ALIPHATIC_CORES
    seen = set()
    while len(rows) < n:
        core = RNG.choice(cores)
        a, b = RNG.choice(CHAINS), RNG.choice(CHAINS)
        smi = f"{a}{core}" if not b else f"{a}{core}{b}" if a else f"{core}{b}"
        if not a and not b:
            smi = core
        if a and not a[-1].isalpha() and a[-1] not in ")]":
            continue
        if smi in seen and len(seen) < 900:
            continue
        seen.add(smi)
        cliff = 1 if RNG.random() < 0.1 else 0
        rows.append((smi, aromatic_count(smi), cliff))
    return rows


# ---------------------------------------------------------------- reaction types


def reaction_type_toy():
    rows = []
    # class 1: a carbon-halogen bond is broken
    for prefix, carbon in ALKYL[:10]:
        for x in ("Cl", "Br"):
            rows.append((sn2(prefix, carbon, x), 1))
    # class 0: no halogen anywhere
    for acyl, al in itertools.product(ACYL, ALCOHOL[:3]):
        rows.append((ester(acyl, al), 0))
    for a, b in KETONES[:8]:
        rows.append((reduction(a, b), 0))
    RNG.shuffle(rows)
    return rows


def write_lines(path, lines, header=None):
    with open(path, "w", newline="") as f:
        if header:
            f.write(header + "\n")
        for line in lines:
            f.write(line + "\n")


def main():
    DATA.mkdir(exist_ok=True)
    desk = desk_corpus()
    write_lines(DATA / "desk.rsmi", desk, "# desk-scale atom-mapped reaction corpus")
    centres = centre_fixtures(desk)
    write_lines(DATA / "centres.rsmi", centres, "# reaction-centre fixtures")
    write_lines(DATA / "molecules.smi", molecule_corpus())
    write_lines(DATA / "finkelstein.rsmi", ["[CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]"])
    write_lines(
        DATA / "two_reactions.rsmi",
        [
            "[CH3:1][Br:2].[I-:3]>>[CH3:1][I:3].[Br-:2]",
            "[CH3:1][C:2](=[O:3])[OH:4].[CH3:5][OH:6]>>[CH3:1][C:2](=[O:3])[O:6][CH3:5]",
        ],
    )
    with open(DATA / "aromatic.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "label", "cliff"])
        w.writerows(aromatic_dataset())
    with open(DATA / "rxn_types.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["reaction", "label"])
        w.writerows(reaction_type_toy())
    with open(DATA / "rxn_three.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["reaction", "label"])
        w.writerows(
            [
                ("[CH3:1][CH2:2][Cl:3].[C-:4]#[N:5]>>[CH3:1][CH2:2][C:4]#[N:5].[Cl-:3]", 0),
                (reduction("C", "CC"), 1),
                (ester("C", ("C", "OH")), 2),
            ]
        )
    with open(DATA / "pairs.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles_a", "smiles_b", "label"])
        mols = [r[0] for r in aromatic_dataset(120)]
        for a, b in zip(mols[0::2], mols[1::2]):
            w.writerow([a, b, int(aromatic_count(a) > 0 and aromatic_count(b) > 0)])
    print(f"desk {len(desk)}, centres {len(centres)}, molecules {len(molecule_corpus())}")


if __name__ == "__main__":
    main()
