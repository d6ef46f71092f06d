//! Periodic Kekulé-tricoloured honeycomb, the round-robin measurement
//! schedule, cylinder cuts, and small hand-built graphs.
//!
//! Unit cell `(x, y)` holds sites `A(x,y)` and `B(x,y)`. Every bond joins an
//! A site to a B site and is stored with `a` on sublattice A:
//! leg 0 is `A(x,y)-B(x,y)`, leg 1 is `A(x,y)-B(x-1,y)`, leg 2 is
//! `A(x,y)-B(x,y-1)`. Plaquette `P(x,y)` has colour `(x - y) mod 3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Color {
        Self::ALL[i % 3]
    }

    /// The colour that is neither `a` nor `b` (`a != b`).
    pub fn third(a: Color, b: Color) -> Color {
        debug_assert_ne!(a, b);
        Color::from_index(3 - a.index() - b.index())
    }

    /// Pauli basis measured on bonds of this colour.
    pub fn pauli(self) -> Pauli {
        match self {
            Color::R => Pauli::Z,
            Color::G => Pauli::Y,
            Color::B => Pauli::X,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::R => 'R',
            Color::G => 'G',
            Color::B => 'B',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub color: Color,
}

/// A closed loop of bonds; `bonds[k]` joins `sites[k]` and `sites[k+1]` (cyclically).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plaquette {
    pub id: usize,
    pub color: Color,
    pub sites: Vec<usize>,
    pub bonds: Vec<usize>,
}

/// Sites, coloured bonds and plaquettes. Used for both the torus and the
/// hand-built oracle graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n_sites: usize,
    pub bonds: Vec<Bond>,
    pub plaquettes: Vec<Plaquette>,
}

impl Graph {
    /// Builds a graph from `(a, b, colour)` bonds and plaquettes given as site rings.
    pub fn new(
        n_sites: usize,
        bonds: &[(usize, usize, Color)],
        rings: &[(Color, Vec<usize>)],
    ) -> Result<Graph> {
        let mut out = Vec::with_capacity(bonds.len());
        for (id, &(a, b, color)) in bonds.iter().enumerate() {
            if a >= n_sites || b >= n_sites {
                return Err(Error::InvalidGraph(format!("bond {id} references a missing site")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("bond {id} is a self loop")));
            }
            out.push(Bond { id, a, b, color });
        }
        let mut graph = Graph { n_sites, bonds: out, plaquettes: Vec::new() };
        for (color, sites) in rings {
            let id = graph.plaquettes.len();
            let k = sites.len();
            let mut ring_bonds = Vec::with_capacity(k);
            for i in 0..k {
                let (p, q) = (sites[i], sites[(i + 1) % k]);
                let bond = graph.find_bond(p, q).ok_or_else(|| {
                    Error::InvalidGraph(format!("plaquette {id}: no bond between {p} and {q}"))
                })?;
                ring_bonds.push(bond);
            }
            graph.plaquettes.push(Plaquette { id, color: *color, sites: sites.clone(), bonds: ring_bonds });
        }
        Ok(graph)
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn find_bond(&self, p: usize, q: usize) -> Option<usize> {
        self.bonds
            .iter()
            .position(|b| (b.a == p && b.b == q) || (b.a == q && b.b == p))
    }

    pub fn bonds_of_color(&self, c: Color) -> Vec<usize> {
        self.bonds.iter().filter(|b| b.color == c).map(|b| b.id).collect()
    }

    /// Bond ids incident to `site`.
    pub fn site_bonds(&self, site: usize) -> Vec<usize> {
        self.bonds
            .iter()
            .filter(|b| b.a == site || b.b == site)
            .map(|b| b.id)
            .collect()
    }

    /// Plaquettes containing `bond`.
    pub fn bond_plaquettes(&self, bond: usize) -> Vec<usize> {
        self.plaquettes
            .iter()
            .filter(|p| p.bonds.contains(&bond))
            .map(|p| p.id)
            .collect()
    }
}

/// The L x L periodic honeycomb with Kekulé colouring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub l: usize,
    pub graph: Graph,
    pub positions: Vec<[f64; 2]>,
    pub sublattice: Vec<Sublattice>,
    pub cells: Vec<(usize, usize)>,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

impl Lattice {
    pub fn new(l: usize) -> Result<Lattice> {
        if l < 3 || l % 3 != 0 {
            return Err(Error::InvalidL(l));
        }
        let n_cells = l * l;
        let mut positions = Vec::with_capacity(2 * n_cells);
        let mut sublattice = Vec::with_capacity(2 * n_cells);
        let mut cells = Vec::with_capacity(2 * n_cells);
        for y in 0..l {
            for x in 0..l {
                let ax = x as f64 + 0.5 * y as f64;
                let ay = 0.5 * SQRT3 * y as f64;
                positions.push([ax, ay]);
                positions.push([ax + 0.5, ay + 0.5 / SQRT3]);
                sublattice.push(Sublattice::A);
                sublattice.push(Sublattice::B);
                cells.push((x, y));
                cells.push((x, y));
            }
        }
        let site = |x: usize, y: usize, s: Sublattice| {
            2 * ((y % l) * l + (x % l)) + if s == Sublattice::A { 0 } else { 1 }
        };
        let plaq_color = |x: usize, y: usize| Color::from_index((x % l) + 2 * (y % l));

        // Plaquette rings; P(x,y) is bounded by
        // A(x,y) B(x,y) A(x+1,y) B(x+1,y-1) A(x+1,y-1) B(x,y-1).
        let mut rings = Vec::with_capacity(n_cells);
        for y in 0..l {
            for x in 0..l {
                let (x1, ym) = (x + 1, y + l - 1);
                rings.push((
                    plaq_color(x, y),
                    vec![
                        site(x, y, Sublattice::A),
                        site(x, y, Sublattice::B),
                        site(x1, y, Sublattice::A),
                        site(x1, ym, Sublattice::B),
                        site(x1, ym, Sublattice::A),
                        site(x, ym, Sublattice::B),
                    ],
                ));
            }
        }

        // Bonds in cell-major order, legs 0,1,2. Colour = third colour of the
        // two plaquettes sharing the bond.
        let mut bonds = Vec::with_capacity(3 * n_cells);
        for y in 0..l {
            for x in 0..l {
                let a = site(x, y, Sublattice::A);
                let legs = [
                    (site(x, y, Sublattice::B), (x, y), (x + l - 1, y + 1)),
                    (site(x + l - 1, y, Sublattice::B), (x + l - 1, y), (x + l - 1, y + 1)),
                    (site(x, y + l - 1, Sublattice::B), (x + l - 1, y), (x, y)),
                ];
                for (b, p, q) in legs {
                    let color = Color::third(plaq_color(p.0, p.1), plaq_color(q.0, q.1));
                    bonds.push((a, b, color));
                }
            }
        }
        let graph = Graph::new(2 * n_cells, &bonds, &rings)?;
        let lattice = Lattice { l, graph, positions, sublattice, cells };
        lattice.check_invariants()?;
        Ok(lattice)
    }

    pub fn n_sites(&self) -> usize {
        self.graph.n_sites
    }

    pub fn n_bonds(&self) -> usize {
        self.graph.n_bonds()
    }

    pub fn site_id(&self, x: usize, y: usize, s: Sublattice) -> usize {
        2 * ((y % self.l) * self.l + (x % self.l)) + if s == Sublattice::A { 0 } else { 1 }
    }

    /// Bond id of leg `leg` (0, 1, 2) at cell `(x, y)`.
    pub fn bond_id(&self, x: usize, y: usize, leg: usize) -> usize {
        3 * ((y % self.l) * self.l + (x % self.l)) + leg
    }

    /// Minimum-image Euclidean distance between two sites (bond length 1/sqrt 3).
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let l = self.l as f64;
        let (pi, pj) = (self.positions[i], self.positions[j]);
        let d = [pj[0] - pi[0], pj[1] - pi[1]];
        let mut best = f64::INFINITY;
        for m in -1i32..=1 {
            for n in -1i32..=1 {
                let dx = d[0] + l * (m as f64 + 0.5 * n as f64);
                let dy = d[1] + l * 0.5 * SQRT3 * n as f64;
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best
    }

    fn check_invariants(&self) -> Result<()> {
        let g = &self.graph;
        let n = self.n_sites();
        for c in Color::ALL {
            let mut covered = vec![0u8; n];
            for id in g.bonds_of_color(c) {
                covered[g.bonds[id].a] += 1;
                covered[g.bonds[id].b] += 1;
            }
            if covered.iter().any(|&k| k != 1) {
                return Err(Error::InvalidGraph(format!("colour {c:?} is not a perfect matching")));
            }
        }
        let mut owners = vec![Vec::new(); g.n_bonds()];
        for p in &g.plaquettes {
            for (k, &b) in p.bonds.iter().enumerate() {
                owners[b].push(p.id);
                let next = p.bonds[(k + 1) % p.bonds.len()];
                if g.bonds[b].color == p.color || g.bonds[b].color == g.bonds[next].color {
                    return Err(Error::InvalidGraph(format!("plaquette {} boundary does not alternate", p.id)));
                }
            }
        }
        for (b, own) in owners.iter().enumerate() {
            if own.len() != 2 {
                return Err(Error::InvalidGraph(format!("bond {b} lies on {} plaquettes", own.len())));
            }
            let c = g.bonds[b].color;
            if own.iter().any(|&p| g.plaquettes[p].color == c)
                || g.plaquettes[own[0]].color == g.plaquettes[own[1]].color
            {
                return Err(Error::InvalidGraph(format!("bond {b} violates the colour rule")));
            }
        }
        Ok(())
    }

    /// Half-torus cylinder cut. `A` holds the first `floor(L/2)` rows of unit
    /// cells; the orientation is accepted only if the final-round R matching
    /// has `2L/3` bonds across the cut.
    pub fn bipartition(&self) -> Cut {
        let rows = self.l / 2;
        for axis in [CutAxis::Rows, CutAxis::Columns] {
            let in_a: Vec<bool> = self
                .cells
                .iter()
                .map(|&(x, y)| match axis {
                    CutAxis::Rows => y < rows,
                    CutAxis::Columns => x < rows,
                })
                .collect();
            let cut = Cut { size_a: in_a.iter().filter(|&&v| v).count(), in_a, axis };
            if cut.crossing(&self.graph, Color::R).len() == 2 * self.l / 3 {
                return cut;
            }
        }
        unreachable!("no cylinder orientation satisfies the dimer calibration")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutAxis {
    Rows,
    Columns,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub in_a: Vec<bool>,
    pub size_a: usize,
    pub axis: CutAxis,
}

impl Cut {
    pub fn from_mask(in_a: Vec<bool>) -> Cut {
        Cut { size_a: in_a.iter().filter(|&&v| v).count(), in_a, axis: CutAxis::Rows }
    }

    /// Bonds of colour `c` with one end on each side.
    pub fn crossing(&self, g: &Graph, c: Color) -> Vec<usize> {
        g.bonds
            .iter()
            .filter(|b| b.color == c && self.in_a[b.a] != self.in_a[b.b])
            .map(|b| b.id)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub color: Option<Color>,
    pub bonds: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub round: usize,
    pub bond: usize,
}

/// A plaquette whose boundary is fully measured by rounds `first` and `first + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxWindow {
    pub plaquette: usize,
    pub first: usize,
    pub slots: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub rounds: Vec<Round>,
    pub slots: Vec<Slot>,
    pub offsets: Vec<usize>,
    pub windows: Vec<FluxWindow>,
    bond_slots: Vec<Vec<usize>>,
}

impl Schedule {
    /// Rounds `0..=r` with colours R, G, B, R, ...
    pub fn floquet(lattice: &Lattice, r: usize) -> Result<Schedule> {
        if r < 3 || r % 3 != 0 {
            return Err(Error::InvalidR(r));
        }
        let rounds = (0..=r)
            .map(|n| {
                let c = Color::from_index(n);
                Round { color: Some(c), bonds: lattice.graph.bonds_of_color(c) }
            })
            .collect();
        Self::build(&lattice.graph, rounds)
    }

    /// Arbitrary rounds; each round must be a vertex-disjoint bond set.
    pub fn custom(graph: &Graph, rounds: &[Vec<usize>]) -> Result<Schedule> {
        let rounds = rounds
            .iter()
            .map(|bonds| {
                let first = bonds.first().map(|&b| graph.bonds.get(b).map(|x| x.color));
                let color = match first {
                    Some(Some(c)) if bonds.iter().all(|&b| graph.bonds.get(b).map(|x| x.color) == Some(c)) => Some(c),
                    _ => None,
                };
                Round { color, bonds: bonds.clone() }
            })
            .collect();
        Self::build(graph, rounds)
    }

    fn build(graph: &Graph, rounds: Vec<Round>) -> Result<Schedule> {
        let mut slots = Vec::new();
        let mut offsets = Vec::with_capacity(rounds.len());
        let mut bond_slots = vec![Vec::new(); graph.n_bonds()];
        for (n, round) in rounds.iter().enumerate() {
            offsets.push(slots.len());
            let mut used = vec![false; graph.n_sites];
            for &b in &round.bonds {
                let bond = graph
                    .bonds
                    .get(b)
                    .ok_or_else(|| Error::InvalidGraph(format!("round {n} references missing bond {b}")))?;
                if used[bond.a] || used[bond.b] {
                    return Err(Error::InvalidGraph(format!("round {n} has overlapping bonds")));
                }
                used[bond.a] = true;
                used[bond.b] = true;
                bond_slots[b].push(slots.len());
                slots.push(Slot { round: n, bond: b });
            }
        }
        let mut sched = Schedule { rounds, slots, offsets, windows: Vec::new(), bond_slots };
        for n in 0..sched.rounds.len().saturating_sub(1) {
            for p in &graph.plaquettes {
                let window: Option<Vec<usize>> = p
                    .bonds
                    .iter()
                    .map(|&b| {
                        let here = [sched.slot_of(n, b), sched.slot_of(n + 1, b)];
                        match here {
                            [Some(s), None] | [None, Some(s)] => Some(s),
                            _ => None,
                        }
                    })
                    .collect();
                if let Some(slots) = window {
                    sched.windows.push(FluxWindow { plaquette: p.id, first: n, slots });
                }
            }
        }
        Ok(sched)
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Depth r; rounds are indexed `0..=r`.
    pub fn depth(&self) -> usize {
        self.rounds.len() - 1
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_of(&self, round: usize, bond: usize) -> Option<usize> {
        self.bond_slots[bond].iter().copied().find(|&s| self.slots[s].round == round)
    }

    /// Every slot at which `bond` is measured, in time order.
    pub fn bond_slots(&self, bond: usize) -> &[usize] {
        &self.bond_slots[bond]
    }

    /// Windows enveloped by the last two rounds.
    pub fn final_windows(&self) -> Vec<&FluxWindow> {
        let last = self.depth().saturating_sub(1);
        self.windows.iter().filter(|w| w.first == last).collect()
    }

    pub fn windows_between(&self, first: usize) -> Vec<&FluxWindow> {
        self.windows.iter().filter(|w| w.first == first).collect()
    }
}

/// Description of a small hand-built circuit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomSpec {
    pub n_sites: usize,
    pub bonds: Vec<(usize, usize, Color)>,
    pub plaquettes: Vec<(Color, Vec<usize>)>,
    pub rounds: Vec<Vec<usize>>,
}

pub fn build_custom_graph(spec: &CustomSpec) -> Result<(Graph, Schedule)> {
    let graph = Graph::new(spec.n_sites, &spec.bonds, &spec.plaquettes)?;
    let sched = Schedule::custom(&graph, &spec.rounds)?;
    Ok((graph, sched))
}

/// Two qubits joined by one ZZ bond, measured in each of `rounds` rounds.
pub fn single_bond(rounds: usize) -> CustomSpec {
    CustomSpec {
        n_sites: 2,
        bonds: vec![(0, 1, Color::R)],
        plaquettes: Vec::new(),
        rounds: vec![vec![0]; rounds],
    }
}

/// One hexagon: YY bonds (0,1),(2,3),(4,5) in round 0, XX bonds
/// (1,2),(3,4),(5,0) in round 1; the enclosed plaquette is red.
pub fn hexagon() -> CustomSpec {
    CustomSpec {
        n_sites: 6,
        bonds: vec![
            (0, 1, Color::G),
            (2, 3, Color::G),
            (4, 5, Color::G),
            (1, 2, Color::B),
            (3, 4, Color::B),
            (5, 0, Color::B),
        ],
        plaquettes: vec![(Color::R, (0..6).collect())],
        rounds: vec![vec![0, 1, 2], vec![3, 4, 5]],
    }
}
