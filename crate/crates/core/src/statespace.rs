//! Truncated normal-mode occupation basis and block-diagonal density
//! matrices over it.
//!
//! With at most two excitations the basis splits into four families:
//!
//! | sector | states (mode `i`, pair `i < j`)                                  | block |
//! |--------|------------------------------------------------------------------|-------|
//! | I      | vacuum                                                           | 1×1   |
//! | II     | `|0,1⟩_i`, `|1,0⟩_i`                                             | 2×2   |
//! | III    | `|0,2⟩_i`, `|1,1⟩_i`                                             | 2×2   |
//! | IV     | `|0,1⟩_i|0,1⟩_j`, `|0,1⟩_i|1,0⟩_j`, `|1,0⟩_i|0,1⟩_j`, `|1,0⟩_i|1,0⟩_j` | 4×4   |
//!
//! where `|atom, field⟩_i` labels the collective atomic and photonic
//! occupation of normal mode `i`. Every state is uniquely identified by the
//! pair of its atom configuration and its field configuration, and every
//! coherence inside a block connects states that differ in both, so the
//! atom and field marginals of a block-diagonal state are diagonal.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sector {
    I,
    II,
    III,
    IV,
}

/// Which collective atomic modes carry an excitation (hard-core, so each at
/// most once).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomConfig {
    None,
    One(usize),
    Two(usize, usize),
}

impl AtomConfig {
    pub fn excitations(&self) -> u32 {
        match self {
            AtomConfig::None => 0,
            AtomConfig::One(_) => 1,
            AtomConfig::Two(..) => 2,
        }
    }

    fn from_modes(mut modes: Vec<usize>) -> Self {
        modes.sort_unstable();
        match modes.as_slice() {
            [] => AtomConfig::None,
            [i] => AtomConfig::One(*i),
            [i, j] => AtomConfig::Two(*i, *j),
            _ => unreachable!("at most two atomic excitations"),
        }
    }
}

/// Photon configuration over the normal modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldConfig {
    Vacuum,
    One(usize),
    /// Two photons in the same mode.
    Double(usize),
    /// One photon in each of modes `i < j`.
    Pair(usize, usize),
}

impl FieldConfig {
    pub fn excitations(&self) -> u32 {
        match self {
            FieldConfig::Vacuum => 0,
            FieldConfig::One(_) => 1,
            FieldConfig::Double(_) | FieldConfig::Pair(..) => 2,
        }
    }

    fn from_occupations(mut occ: Vec<(usize, u8)>) -> Self {
        occ.sort_unstable();
        match occ.as_slice() {
            [] => FieldConfig::Vacuum,
            [(i, 1)] => FieldConfig::One(*i),
            [(i, 2)] => FieldConfig::Double(*i),
            [(i, 1), (j, 1)] => FieldConfig::Pair(*i, *j),
            _ => unreachable!("at most two photons"),
        }
    }
}

/// One labelled basis ket. Mode indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisState {
    pub sector: Sector,
    pub atom_excited: Vec<usize>,
    /// `(mode, photons)` with photons in `{1, 2}`.
    pub field_occ: Vec<(usize, u8)>,
    pub total_excitation: u32,
}

impl BasisState {
    fn new(sector: Sector, atom_excited: Vec<usize>, field_occ: Vec<(usize, u8)>) -> Self {
        let total = atom_excited.len() as u32 + field_occ.iter().map(|&(_, n)| n as u32).sum::<u32>();
        Self {
            sector,
            atom_excited,
            field_occ,
            total_excitation: total,
        }
    }

    pub fn atom_config(&self) -> AtomConfig {
        AtomConfig::from_modes(self.atom_excited.clone())
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig::from_occupations(self.field_occ.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Vacuum,
    /// Sector II of mode `i`.
    OneExciton(usize),
    /// Sector III of mode `i`.
    TwoExciton(usize),
    /// Sector IV of modes `i < j`.
    Pair(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Immutable truncated basis with its block partition and label lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n_sites: usize,
    max_excitation: u32,
    states: Vec<BasisState>,
    blocks: Vec<Block>,
    lookup: BTreeMap<(AtomConfig, FieldConfig), usize>,
    atom_configs: Vec<AtomConfig>,
    field_configs: Vec<FieldConfig>,
    state_atom: Vec<usize>,
    state_field: Vec<usize>,
}

/// Expected dimension `1 + 2N + 2N + 4·N(N-1)/2` of the two-exciton space.
pub fn two_exciton_dimension(n_sites: usize) -> usize {
    1 + 4 * n_sites + 2 * n_sites * n_sites.saturating_sub(1)
}

/// Two-exciton space over `n_sites` modes.
pub fn build_space(n_sites: usize) -> Result<Arc<StateSpace>> {
    StateSpace::truncated(n_sites, 2).map(Arc::new)
}

impl StateSpace {
    /// Basis with at most `max_excitation` (0, 1 or 2) excitations.
    pub fn truncated(n_sites: usize, max_excitation: u32) -> Result<Self> {
        if n_sites == 0 {
            return Err(invalid("n_sites", "need at least one mode"));
        }
        if max_excitation > 2 {
            return Err(invalid("max_excitation", "only up to two excitons are supported"));
        }
        let n = n_sites;
        let mut states = Vec::new();
        let mut blocks = Vec::new();
        let mut push_block = |kind, members: Vec<BasisState>, states: &mut Vec<BasisState>| {
            blocks.push(Block {
                kind,
                offset: states.len(),
                len: members.len(),
            });
            states.extend(members);
        };

        push_block(
            BlockKind::Vacuum,
            vec![BasisState::new(Sector::I, vec![], vec![])],
            &mut states,
        );
        if max_excitation >= 1 {
            for i in 0..n {
                push_block(
                    BlockKind::OneExciton(i),
                    vec![
                        BasisState::new(Sector::II, vec![], vec![(i, 1)]),
                        BasisState::new(Sector::II, vec![i], vec![]),
                    ],
                    &mut states,
                );
            }
        }
        if max_excitation >= 2 {
            for i in 0..n {
                push_block(
                    BlockKind::TwoExciton(i),
                    vec![
                        BasisState::new(Sector::III, vec![], vec![(i, 2)]),
                        BasisState::new(Sector::III, vec![i], vec![(i, 1)]),
                    ],
                    &mut states,
                );
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    push_block(
                        BlockKind::Pair(i, j),
                        vec![
                            BasisState::new(Sector::IV, vec![], vec![(i, 1), (j, 1)]),
                            BasisState::new(Sector::IV, vec![j], vec![(i, 1)]),
                            BasisState::new(Sector::IV, vec![i], vec![(j, 1)]),
                            BasisState::new(Sector::IV, vec![i, j], vec![]),
                        ],
                        &mut states,
                    );
                }
            }
        }

        let mut atom_configs = vec![AtomConfig::None];
        let mut field_configs = vec![FieldConfig::Vacuum];
        if max_excitation >= 1 {
            atom_configs.extend((0..n).map(AtomConfig::One));
            field_configs.extend((0..n).map(FieldConfig::One));
        }
        if max_excitation >= 2 {
            for i in 0..n {
                for j in (i + 1)..n {
                    atom_configs.push(AtomConfig::Two(i, j));
                }
            }
            field_configs.extend((0..n).map(FieldConfig::Double));
            for i in 0..n {
                for j in (i + 1)..n {
                    field_configs.push(FieldConfig::Pair(i, j));
                }
            }
        }
        let atom_pos: BTreeMap<AtomConfig, usize> = atom_configs.iter().enumerate().map(|(k, c)| (*c, k)).collect();
        let field_pos: BTreeMap<FieldConfig, usize> = field_configs.iter().enumerate().map(|(k, c)| (*c, k)).collect();

        let mut lookup = BTreeMap::new();
        let mut state_atom = Vec::with_capacity(states.len());
        let mut state_field = Vec::with_capacity(states.len());
        for (idx, s) in states.iter().enumerate() {
            let key = (s.atom_config(), s.field_config());
            let previous = lookup.insert(key, idx);
            debug_assert!(previous.is_none(), "duplicate basis label {key:?}");
            state_atom.push(atom_pos[&key.0]);
            state_field.push(field_pos[&key.1]);
        }

        Ok(Self {
            n_sites,
            max_excitation,
            states,
            blocks,
            lookup,
            atom_configs,
            field_configs,
            state_atom,
            state_field,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn max_excitation(&self) -> u32 {
        self.max_excitation
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn atom_configs(&self) -> &[AtomConfig] {
        &self.atom_configs
    }

    pub fn field_configs(&self) -> &[FieldConfig] {
        &self.field_configs
    }

    /// Position of the state with the given atom and field configuration.
    pub fn index_of(&self, atom: AtomConfig, field: FieldConfig) -> Option<usize> {
        self.lookup.get(&(atom, field)).copied()
    }

    /// Index into [`atom_configs`](Self::atom_configs) of state `k`.
    pub fn atom_index(&self, k: usize) -> usize {
        self.state_atom[k]
    }

    pub fn field_index(&self, k: usize) -> usize {
        self.state_field[k]
    }

    /// Block that contains state `k`.
    pub fn block_of(&self, k: usize) -> &Block {
        let pos = self.blocks.partition_point(|b| b.offset + b.len <= k);
        &self.blocks[pos]
    }
}

/// Diagonal probability distribution over atom or field configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal<C> {
    pub configs: Vec<C>,
    pub probs: Vec<f64>,
}

impl<C: Copy + PartialEq> Marginal<C> {
    pub fn prob(&self, config: C) -> f64 {
        self.configs
            .iter()
            .position(|c| *c == config)
            .map_or(0.0, |k| self.probs[k])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub type AtomMarginal = Marginal<AtomConfig>;
pub type FieldMarginal = Marginal<FieldConfig>;

/// Block-diagonal density matrix over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: Arc<StateSpace>,
    blocks: Vec<DMatrix<Complex64>>,
}

const TRACE_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

impl DensityMatrix {
    /// Wraps the given blocks without checking the density-matrix
    /// invariants; shapes must match the space layout.
    pub fn from_blocks(space: Arc<StateSpace>, blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.len() != space.blocks().len() {
            return Err(Error::Consistency(format!(
                "expected {} blocks, got {}",
                space.blocks().len(),
                blocks.len()
            )));
        }
        for (b, m) in space.blocks().iter().zip(&blocks) {
            if m.nrows() != b.len || m.ncols() != b.len {
                return Err(Error::Consistency(format!(
                    "block {:?} must be {}x{}, got {}x{}",
                    b.kind,
                    b.len,
                    b.len,
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { space, blocks })
    }

    pub fn from_real_blocks(space: Arc<StateSpace>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let blocks = blocks.into_iter().map(|m| m.map(|v| Complex64::new(v, 0.0))).collect();
        Self::from_blocks(space, blocks)
    }

    /// Diagonal state with the given populations (not renormalized).
    pub fn diagonal(space: Arc<StateSpace>, populations: &[f64]) -> Result<Self> {
        if populations.len() != space.dim() {
            return Err(Error::Consistency(format!(
                "expected {} populations, got {}",
                space.dim(),
                populations.len()
            )));
        }
        let blocks = space
            .blocks()
            .iter()
            .map(|b| {
                DMatrix::from_fn(b.len, b.len, |r, c| {
                    if r == c {
                        Complex64::new(populations[b.offset + r], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        Ok(Self { space, blocks })
    }

    /// Pure basis state `|k⟩⟨k|`.
    pub fn projector(space: Arc<StateSpace>, k: usize) -> Result<Self> {
        let mut pops = vec![0.0; space.dim()];
        *pops
            .get_mut(k)
            .ok_or_else(|| invalid("k", format!("state index {k} out of range")))? = 1.0;
        Self::diagonal(space, &pops)
    }

    /// Blocks the dense matrix `dense`, ignoring anything outside the blocks.
    pub fn from_dense(space: Arc<StateSpace>, dense: &DMatrix<Complex64>) -> Result<Self> {
        if dense.nrows() != space.dim() || dense.ncols() != space.dim() {
            return Err(Error::Consistency("dense matrix has the wrong dimension".into()));
        }
        let blocks = space
            .blocks()
            .iter()
            .map(|b| dense.view((b.offset, b.offset), (b.len, b.len)).into_owned())
            .collect();
        Ok(Self { space, blocks })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [DMatrix<Complex64>] {
        &mut self.blocks
    }

    pub fn same_space(&self, other: &DensityMatrix) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|m| m.trace().re).sum()
    }

    pub fn is_real(&self) -> bool {
        self.blocks.iter().all(|m| m.iter().all(|z| z.im == 0.0))
    }

    /// Real parts of the diagonal (populations).
    pub fn populations(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|m| (0..m.nrows()).map(move |k| m[(k, k)].re))
            .collect()
    }

    /// Element `⟨r|ρ|c⟩`; zero across blocks.
    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        let b = self.space.block_of(r);
        if b.range().contains(&c) {
            let idx = self.space.blocks().iter().position(|x| x == b).expect("block in space");
            self.blocks[idx][(r - b.offset, c - b.offset)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let d = self.space.dim();
        let mut out = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for (b, m) in self.space.blocks().iter().zip(&self.blocks) {
            out.view_mut((b.offset, b.offset), (b.len, b.len)).copy_from(m);
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            space: self.space.clone(),
            blocks: self.blocks.iter().map(|m| m * Complex64::new(factor, 0.0)).collect(),
        }
    }

    /// Largest deviation from Hermiticity over all blocks.
    pub fn hermitian_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|m| {
                let mut worst: f64 = 0.0;
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    /// Checks unit trace, Hermiticity and positivity up to round-off.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Consistency(format!("trace is {tr}")));
        }
        let asym = self.hermitian_defect();
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let lowest = self.min_eigenvalue()?;
        if lowest < -PSD_TOL {
            return Err(Error::NotPositive { eigenvalue: lowest });
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lowest = f64::INFINITY;
        for m in &self.blocks {
            let vals = crate::metrics::herm_eigenvalues(m)?;
            lowest = lowest.min(vals[0]);
        }
        Ok(lowest)
    }

    /// Serializes the full matrix row-major with 17 significant digits.
    ///
    /// Real matrices write one number per entry; complex matrices write the
    /// real and imaginary parts as two consecutive numbers.
    pub fn to_text(&self) -> String {
        let dense = self.to_dense();
        let real = self.is_real();
        let mut out = String::new();
        let _ = writeln!(out, "# dim {} {}", dense.nrows(), if real { "real" } else { "complex" });
        for r in 0..dense.nrows() {
            let row: Vec<String> = (0..dense.ncols())
                .map(|c| {
                    let z = dense[(r, c)];
                    if real {
                        format!("{:.16e}", z.re)
                    } else {
                        format!("{:.16e} {:.16e}", z.re, z.im)
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    /// Reads the format written by [`to_text`](Self::to_text).
    pub fn from_text(space: Arc<StateSpace>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Consistency("empty matrix text".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (dim, real) = match parts.as_slice() {
            ["#", "dim", d, kind] => (
                d.parse::<usize>()
                    .map_err(|e| Error::Consistency(format!("bad dimension: {e}")))?,
                *kind == "real",
            ),
            _ => return Err(Error::Consistency(format!("bad header `{header}`"))),
        };
        let per_entry = if real { 1 } else { 2 };
        let mut dense = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for r in 0..dim {
            let line = lines
                .next()
                .ok_or_else(|| Error::Consistency(format!("missing row {r}")))?;
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Consistency(format!("row {r}: {e}")))
                })
                .collect::<Result<_>>()?;
            if nums.len() != dim * per_entry {
                return Err(Error::Consistency(format!("row {r} has {} numbers", nums.len())));
            }
            for c in 0..dim {
                dense[(r, c)] = if real {
                    Complex64::new(nums[c], 0.0)
                } else {
                    Complex64::new(nums[2 * c], nums[2 * c + 1])
                };
            }
        }
        Self::from_dense(space, &dense)
    }
}

const MARGINAL_TOL: f64 = 1e-10;

fn check_normalized(total: f64) -> Result<()> {
    if (total - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::Consistency(format!("marginal sums to {total}")));
    }
    Ok(())
}

/// Field marginal `ρ_E = Tr_S ρ`, a distribution over photon configurations.
pub fn partial_trace_atoms(rho: &DensityMatrix) -> Result<FieldMarginal> {
    let space = rho.space();
    let mut probs = vec![0.0; space.field_configs().len()];
    for (k, p) in rho.populations().into_iter().enumerate() {
        probs[space.field_index(k)] += p;
    }
    check_normalized(probs.iter().sum())?;
    #[cfg(debug_assertions)]
    assert_diagonal(&generic_partial_trace_atoms(rho));
    Ok(Marginal {
        configs: space.field_configs().to_vec(),
        probs,
    })
}

/// Atom marginal `ρ_S = Tr_E ρ`, a distribution over atomic configurations.
pub fn partial_trace_fields(rho: &DensityMatrix) -> Result<AtomMarginal> {
    let space = rho.space();
    let mut probs = vec![0.0; space.atom_configs().len()];
    for (k, p) in rho.populations().into_iter().enumerate() {
        probs[space.atom_index(k)] += p;
    }
    check_normalized(probs.iter().sum())?;
    #[cfg(debug_assertions)]
    assert_diagonal(&generic_partial_trace_fields(rho));
    Ok(Marginal {
        configs: space.atom_configs().to_vec(),
        probs,
    })
}

#[cfg(debug_assertions)]
fn assert_diagonal(m: &DMatrix<Complex64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if r != c {
                assert!(
                    m[(r, c)].norm() < 1e-14,
                    "marginal coherence {} at ({r},{c})",
                    m[(r, c)]
                );
            }
        }
    }
}

/// Full reduced matrix `Σ_f ⟨a, f|ρ|a', f⟩` over atom configurations,
/// coherences included.
pub fn generic_partial_trace_fields(rho: &DensityMatrix) -> DMatrix<Complex64> {
    let space = rho.space();
    let n = space.atom_configs().len();
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (b, m) in space.blocks().iter().zip(rho.blocks()) {
        for r in 0..b.len {
            for c in 0..b.len {
                let (kr, kc) = (b.offset + r, b.offset + c);
                if space.field_index(kr) == space.field_index(kc) {
                    out[(space.atom_index(kr), space.atom_index(kc))] += m[(r, c)];
                }
            }
        }
    }
    out
}

/// Full reduced matrix `Σ_a ⟨a, f|ρ|a, f'⟩` over field configurations.
pub fn generic_partial_trace_atoms(rho: &DensityMatrix) -> DMatrix<Complex64> {
    let space = rho.space();
    let n = space.field_configs().len();
    let mut out = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (b, m) in space.blocks().iter().zip(rho.blocks()) {
        for r in 0..b.len {
            for c in 0..b.len {
                let (kr, kc) = (b.offset + r, b.offset + c);
                if space.atom_index(kr) == space.atom_index(kc) {
                    out[(space.field_index(kr), space.field_index(kc))] += m[(r, c)];
                }
            }
        }
    }
    out
}

/// Product of the two marginals restricted to the truncated basis and
/// renormalized to unit trace.
///
/// Returns the state together with the surviving weight before
/// renormalization.
pub fn product_and_project_weighted(
    atoms: &AtomMarginal,
    fields: &FieldMarginal,
    space: &Arc<StateSpace>,
) -> Result<(DensityMatrix, f64)> {
    if atoms.configs != space.atom_configs() || fields.configs != space.field_configs() {
        return Err(Error::SpaceMismatch);
    }
    check_normalized(atoms.total())?;
    check_normalized(fields.total())?;
    let mut pops: Vec<f64> = (0..space.dim())
        .map(|k| atoms.probs[space.atom_index(k)] * fields.probs[space.field_index(k)])
        .collect();
    let kept: f64 = pops.iter().sum();
    if !(kept > 0.0) {
        return Err(Error::Consistency(
            "product state has no weight in the truncated space".into(),
        ));
    }
    pops.iter_mut().for_each(|p| *p /= kept);
    Ok((DensityMatrix::diagonal(space.clone(), &pops)?, kept))
}

pub fn product_and_project(
    atoms: &AtomMarginal,
    fields: &FieldMarginal,
    space: &Arc<StateSpace>,
) -> Result<DensityMatrix> {
    product_and_project_weighted(atoms, fields, space).map(|(rho, _)| rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dimensions() {
        assert_eq!(build_space(5).unwrap().dim(), 61);
        assert_eq!(two_exciton_dimension(5), 61);
        let one = build_space(1).unwrap();
        assert_eq!(one.dim(), 5);
        assert!(one.blocks().iter().all(|b| !matches!(b.kind, BlockKind::Pair(..))));
        assert_eq!(build_space(2).unwrap().dim(), 13);
        assert_eq!(StateSpace::truncated(5, 1).unwrap().dim(), 11);
        assert!(build_space(0).is_err());
        assert!(StateSpace::truncated(3, 3).is_err());
    }

    #[test]
    fn sectors_match_occupations() {
        for n in 1..=6 {
            let space = build_space(n).unwrap();
            assert_eq!(space.dim(), two_exciton_dimension(n));
            for s in space.states() {
                let want = match s.total_excitation {
                    0 => Sector::I,
                    1 => Sector::II,
                    _ => {
                        let mut modes: Vec<usize> = s.atom_excited.clone();
                        modes.extend(s.field_occ.iter().map(|&(m, _)| m));
                        modes.sort_unstable();
                        modes.dedup();
                        if modes.len() == 1 {
                            Sector::III
                        } else {
                            Sector::IV
                        }
                    }
                };
                assert_eq!(s.sector, want, "{s:?}");
                assert!(s.total_excitation <= 2);
            }
        }
    }

    #[test]
    fn blocks_partition_states() {
        let space = build_space(4).unwrap();
        let mut covered = vec![0usize; space.dim()];
        for b in space.blocks() {
            for k in b.range() {
                covered[k] += 1;
                assert_eq!(space.block_of(k), b);
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn lookup_is_bijective() {
        let space = build_space(5).unwrap();
        for (k, s) in space.states().iter().enumerate() {
            assert_eq!(space.index_of(s.atom_config(), s.field_config()), Some(k));
        }
        let mut pairs = 0;
        for a in space.atom_configs() {
            for f in space.field_configs() {
                if a.excitations() + f.excitations() <= 2 {
                    pairs += 1;
                    assert!(space.index_of(*a, *f).is_some(), "{a:?} {f:?}");
                }
            }
        }
        assert_eq!(pairs, 61);
    }

    #[test]
    fn block_orders() {
        let space = build_space(3).unwrap();
        let pair = space.blocks().iter().find(|b| b.kind == BlockKind::Pair(0, 2)).unwrap();
        let labels: Vec<(AtomConfig, FieldConfig)> = pair
            .range()
            .map(|k| (space.states()[k].atom_config(), space.states()[k].field_config()))
            .collect();
        assert_eq!(
            labels,
            vec![
                (AtomConfig::None, FieldConfig::Pair(0, 2)),
                (AtomConfig::One(2), FieldConfig::One(0)),
                (AtomConfig::One(0), FieldConfig::One(2)),
                (AtomConfig::Two(0, 2), FieldConfig::Vacuum),
            ]
        );
        let three = space
            .blocks()
            .iter()
            .find(|b| b.kind == BlockKind::TwoExciton(1))
            .unwrap();
        assert_eq!(space.states()[three.offset].field_config(), FieldConfig::Double(1));
        assert_eq!(space.states()[three.offset + 1].atom_config(), AtomConfig::One(1));
    }

    #[test]
    fn vacuum_marginals() {
        let space = build_space(3).unwrap();
        let rho = DensityMatrix::projector(space.clone(), 0).unwrap();
        let atoms = partial_trace_fields(&rho).unwrap();
        let fields = partial_trace_atoms(&rho).unwrap();
        assert_eq!(atoms.prob(AtomConfig::None), 1.0);
        assert_eq!(fields.prob(FieldConfig::Vacuum), 1.0);
        let (prod, kept) = product_and_project_weighted(&atoms, &fields, &space).unwrap();
        assert_eq!(kept, 1.0);
        assert_eq!(prod, rho);
    }

    #[test]
    fn mixture_marginals() {
        let space = build_space(2).unwrap();
        let photon = space.index_of(AtomConfig::None, FieldConfig::One(0)).unwrap();
        let atom = space.index_of(AtomConfig::One(0), FieldConfig::Vacuum).unwrap();
        let mut pops = vec![0.0; space.dim()];
        pops[photon] = 0.5;
        pops[atom] = 0.5;
        let rho = DensityMatrix::diagonal(space, &pops).unwrap();
        let fields = partial_trace_atoms(&rho).unwrap();
        assert_eq!(fields.prob(FieldConfig::One(0)), 0.5);
        assert_eq!(fields.prob(FieldConfig::Vacuum), 0.5);
        let atoms = partial_trace_fields(&rho).unwrap();
        assert_eq!(atoms.prob(AtomConfig::None), 0.5);
        assert_eq!(atoms.prob(AtomConfig::One(0)), 0.5);
    }

    #[test]
    fn trace_deficit_is_reported() {
        let space = build_space(2).unwrap();
        let rho = DensityMatrix::projector(space, 3).unwrap().scaled(0.5);
        assert!(matches!(partial_trace_fields(&rho), Err(Error::Consistency(_))));
        assert!(matches!(partial_trace_atoms(&rho), Err(Error::Consistency(_))));
    }

    #[test]
    fn text_round_trip() {
        let space = build_space(2).unwrap();
        let mut rho = DensityMatrix::projector(space.clone(), 1).unwrap();
        rho.blocks_mut()[1][(0, 1)] = Complex64::new(0.1, 0.2);
        rho.blocks_mut()[1][(1, 0)] = Complex64::new(0.1, -0.2);
        let text = rho.to_text();
        assert!(text.starts_with("# dim 13 complex"));
        assert_eq!(DensityMatrix::from_text(space.clone(), &text).unwrap(), rho);
        let real = DensityMatrix::projector(space.clone(), 4).unwrap();
        let text = real.to_text();
        assert!(text.lines().nth(5).unwrap().contains("1.0000000000000000e0"));
        assert_eq!(DensityMatrix::from_text(space, &text).unwrap(), real);
    }

    #[test]
    fn validate_catches_problems() {
        let space = build_space(1).unwrap();
        let good = DensityMatrix::projector(space.clone(), 2).unwrap();
        good.validate().unwrap();
        assert!(good.scaled(2.0).validate().is_err());
        let mut bad = good.clone();
        bad.blocks_mut()[1][(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(matches!(bad.validate(), Err(Error::NotHermitian { .. })));
        let mut neg = DensityMatrix::diagonal(space.clone(), &[0.5, 0.7, -0.2, 0.0, 0.0]).unwrap();
        assert!(matches!(neg.validate(), Err(Error::NotPositive { .. })));
        neg.blocks_mut()[0][(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(DensityMatrix::from_blocks(space, vec![]).is_err());
    }

    #[test]
    fn entries_outside_blocks_vanish() {
        let space = build_space(2).unwrap();
        let rho = DensityMatrix::projector(space, 1).unwrap();
        assert_abs_diff_eq!(rho.entry(1, 1).re, 1.0);
        assert_eq!(rho.entry(0, 1), Complex64::new(0.0, 0.0));
        assert_eq!(rho.to_dense()[(1, 1)].re, 1.0);
    }
}
