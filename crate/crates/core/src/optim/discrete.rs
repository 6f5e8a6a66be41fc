//! Coordinate descent over a finite codebook with rank-2 Woodbury updates.

use serde::Serialize;

use crate::cells::{assemble_gamma, CellCodebook, CellSource, Termination, TuningState};
use crate::error::{Error, Result};
use crate::linalg::{det2, inv2, Block2, CMatrix, ZERO};
use crate::optim::gradient::Objective;
use crate::optim::loss::LossSpec;
use crate::solvers::model::dense_core_lu;
use crate::solvers::{thomas_factorize, CouplingModel};

/// Pivots `I + C·EᵀA⁻¹E` with `|det|` below this are treated as singular.
pub const WOODBURY_PIVOT_DET: f64 = 1e-12;

/// Relative margin a candidate must beat the incumbent by.
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Quantities of one cell needed to score any replacement state.
///
/// With `X = A⁻¹`, `E` the two unit columns of the cell ports and
/// `F = S_ET A_S`, the output after replacing the cell's inverse block by
/// `current + C` is `Y − P (I + C K)⁻¹ C R` (plus second-order terms for the
/// weakly coupled model).
#[derive(Clone, Debug)]
pub struct CellWindow {
    /// `EᵀXE`.
    pub k: Block2,
    /// `S_RE X E`.
    pub p_left: CMatrix,
    /// `EᵀX F`.
    pub r_right: CMatrix,
    pub weak: Option<WeakTerms>,
}

/// Extra terms for `S_RE X ΔS X F`.
#[derive(Clone, Debug)]
pub struct WeakTerms {
    /// `S_RE X ΔS X E`.
    pub p_weak: CMatrix,
    /// `EᵀX ΔS X F`.
    pub r_weak: CMatrix,
    /// `EᵀX ΔS X E`.
    pub k_weak: Block2,
}

impl CellWindow {
    /// Channel after changing the cell's inverse block by `c`, or `None`
    /// if the 2×2 pivot is singular.
    pub fn updated_output(&self, y: &CMatrix, c: &Block2) -> Option<CMatrix> {
        if c.iter().all(|v| *v == ZERO) {
            return Some(y.clone());
        }
        let pivot = Block2::identity() + c * self.k;
        if det2(&pivot).norm() < WOODBURY_PIVOT_DET {
            return None;
        }
        let mm = inv2(&pivot)? * c;
        let mut out = y - &self.p_left * (mm * &self.r_right);
        if let Some(w) = &self.weak {
            let mr = mm * &self.r_right;
            out -= &self.p_left * (mm * &w.r_weak);
            out -= &w.p_weak * &mr;
            out += &self.p_left * (mm * w.k_weak * &mr);
        }
        Some(out)
    }
}

/// Loss of a candidate cell state via the rank-2 update, `None` when infeasible.
pub fn woodbury_candidate_loss(
    window: &CellWindow,
    y: &CMatrix,
    current_inverse: &Block2,
    candidate_inverse: &Block2,
    spec: &LossSpec,
) -> Result<Option<f64>> {
    match window.updated_output(y, &(candidate_inverse - current_inverse)) {
        Some(out) => Ok(Some(spec.evaluate(&out)?.0)),
        None => Ok(None),
    }
}

/// Factorized core `A = Γ⁻¹ − S_core` for the current state.
struct Workspace {
    y: CMatrix,
    loss: f64,
    solver: CoreSolver,
    /// `S_RE X`, the rows of `X` seen by the receiver.
    obs: CMatrix,
    /// `X F`.
    xf: CMatrix,
    /// `ΔS X F` and `S_RE X ΔS` for the weakly coupled model.
    weak: Option<(CMatrix, CMatrix)>,
}

enum CoreSolver {
    Dense(crate::linalg::DenseLu),
    Banded(crate::solvers::ThomasFactorization),
}

impl CoreSolver {
    fn solve(&self, b: &CMatrix) -> CMatrix {
        match self {
            CoreSolver::Dense(lu) => lu.solve(b),
            CoreSolver::Banded(f) => f.solve(b),
        }
    }

    fn solve_adjoint(&self, b: &CMatrix) -> CMatrix {
        match self {
            CoreSolver::Dense(lu) => lu.solve_adjoint(b),
            CoreSolver::Banded(f) => f.solve_adjoint(b),
        }
    }
}

impl Workspace {
    fn build(obj: &Objective<'_>, gamma: &Termination) -> Result<Self> {
        let sys = obj.system;
        let s = sys.scattering();
        let gamma_inv = gamma.inverse()?;
        let solver = match obj.model {
            CouplingModel::Ni => {
                CoreSolver::Dense(dense_core_lu(&gamma_inv, &s.s_ee, sys.condition_cap)?)
            }
            CouplingModel::I | CouplingModel::W => {
                CoreSolver::Banded(thomas_factorize(&sys.isolated_core(&gamma_inv))?)
            }
        };
        let f = &s.s_et * &obj.excitation;
        let xf = solver.solve(&f);
        let obs = solver.solve_adjoint(&s.s_re.adjoint()).adjoint();
        let mut a_e_term = xf.clone();
        let weak = if obj.model == CouplingModel::W {
            let delta = &sys.decomposition().delta_s;
            let dxf = delta * &xf;
            a_e_term += solver.solve(&dxf);
            let obs_delta = &obs * delta;
            Some((dxf, obs_delta))
        } else {
            None
        };
        let y = &s.s_rt * &obj.excitation + &s.s_re * a_e_term;
        let (loss, _) = obj.spec.evaluate(&y)?;
        Ok(Self {
            y,
            loss,
            solver,
            obs,
            xf,
            weak,
        })
    }

    fn window(&self, obj: &Objective<'_>, p: usize) -> CellWindow {
        let n = obj.topology().total_ports();
        let (m, q) = obj.topology().ports(p);
        let mut e = CMatrix::zeros(n, 2);
        e[(m, 0)] = crate::linalg::ONE;
        e[(q, 1)] = crate::linalg::ONE;
        let cols = self.solver.solve(&e);
        let rows = self.solver.solve_adjoint(&e).adjoint();
        let k = Block2::new(cols[(m, 0)], cols[(m, 1)], cols[(q, 0)], cols[(q, 1)]);
        let p_left = {
            let mut pl = CMatrix::zeros(self.obs.nrows(), 2);
            pl.set_column(0, &self.obs.column(m));
            pl.set_column(1, &self.obs.column(q));
            pl
        };
        let r_right =
            CMatrix::from_rows(&[self.xf.row(m).clone_owned(), self.xf.row(q).clone_owned()]);
        let weak = self.weak.as_ref().map(|(dxf, obs_delta)| {
            let delta = &obj.system.decomposition().delta_s;
            let k_mat = &rows * (delta * &cols);
            WeakTerms {
                p_weak: obs_delta * &cols,
                r_weak: &rows * dxf,
                k_weak: Block2::new(k_mat[(0, 0)], k_mat[(0, 1)], k_mat[(1, 0)], k_mat[(1, 1)]),
            }
        });
        CellWindow {
            k,
            p_left,
            r_right,
            weak,
        }
    }
}

/// One single-cell update (or the initial point, with `cell = None`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: usize,
    pub cell: Option<usize>,
    pub level: Option<usize>,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStop {
    Converged,
    MaxSweeps,
}

#[derive(Clone, Debug)]
pub struct CoordinateOutcome {
    pub state: TuningState,
    pub loss: f64,
    pub trace: Vec<SweepRow>,
    pub sweeps: usize,
    pub stop: SweepStop,
    /// Candidates skipped because of a singular Woodbury pivot.
    pub infeasible: usize,
}

fn inverse_states(codebook: &CellCodebook, cells: usize) -> Vec<Vec<Option<Block2>>> {
    (0..cells)
        .map(|p| codebook.states(p).iter().map(inv2).collect())
        .collect()
}

/// Cell-by-cell exhaustive search over the codebook, sweeping `p = 0..QK`.
pub fn coordinate_descent(
    objective: &Objective<'_>,
    codebook: &CellCodebook,
    init: &TuningState,
    max_sweeps: usize,
) -> Result<CoordinateOutcome> {
    codebook.validate()?;
    let topology = *objective.topology();
    let cells = topology.total_cells();
    codebook.check_cells(cells)?;
    let mut levels = init
        .levels()
        .ok_or_else(|| Error::Config("coordinate descent needs a discrete initial state".into()))?
        .to_vec();
    let inverses = inverse_states(codebook, cells);
    let mut gamma = assemble_gamma(
        &topology,
        CellSource::Discrete(codebook),
        &TuningState::Discrete(levels.clone()),
    )?;
    let mut ws = Workspace::build(objective, &gamma)?;
    let mut trace = vec![SweepRow {
        sweep: 0,
        cell: None,
        level: None,
        loss: ws.loss,
    }];
    let mut infeasible = 0;
    let mut sweeps = 0;
    let stop = loop {
        if sweeps >= max_sweeps {
            break SweepStop::MaxSweeps;
        }
        sweeps += 1;
        let mut changed = false;
        for p in 0..cells {
            let current = levels[p];
            let Some(cur_inv) = inverses[p][current] else {
                return Err(Error::SingularCell { cell: p, det: 0.0 });
            };
            let window = ws.window(objective, p);
            let mut best: Option<(usize, f64)> = None;
            for (l, cand) in inverses[p].iter().enumerate() {
                if l == current {
                    continue;
                }
                let score = match cand {
                    Some(ci) => {
                        woodbury_candidate_loss(&window, &ws.y, &cur_inv, ci, objective.spec)?
                    }
                    None => None,
                };
                match score {
                    Some(v) if v < best.map_or(f64::INFINITY, |b| b.1) => best = Some((l, v)),
                    Some(_) => {}
                    None => {
                        infeasible += 1;
                        log::debug!("cell {p} level {l}: singular update pivot, skipped");
                    }
                }
            }
            let Some((l, predicted)) = best else { continue };
            if predicted >= ws.loss - IMPROVEMENT_TOL * ws.loss.max(f64::MIN_POSITIVE) {
                continue;
            }
            gamma.set_block(p, codebook.states(p)[l]);
            let next = Workspace::build(objective, &gamma)?;
            if next.loss <= ws.loss {
                levels[p] = l;
                ws = next;
                changed = true;
                trace.push(SweepRow {
                    sweep: sweeps,
                    cell: Some(p),
                    level: Some(l),
                    loss: ws.loss,
                });
            } else {
                gamma.set_block(p, codebook.states(p)[current]);
            }
        }
        if !changed {
            break SweepStop::Converged;
        }
    };
    Ok(CoordinateOutcome {
        state: TuningState::Discrete(levels),
        loss: ws.loss,
        trace,
        sweeps,
        stop,
        infeasible,
    })
}

/// Rank-2 update loss of every codebook state of cell `p` around `state`;
/// `None` marks singular pivots.
pub fn candidate_losses(
    objective: &Objective<'_>,
    codebook: &CellCodebook,
    state: &TuningState,
    p: usize,
) -> Result<Vec<Option<f64>>> {
    let topology = *objective.topology();
    codebook.check_cells(topology.total_cells())?;
    let levels = state
        .levels()
        .ok_or_else(|| Error::Config("expected a discrete state".into()))?;
    if p >= levels.len() {
        return Err(Error::IndexRange {
            what: "cell",
            index: p,
            bound: levels.len(),
        });
    }
    let gamma = assemble_gamma(&topology, CellSource::Discrete(codebook), state)?;
    let ws = Workspace::build(objective, &gamma)?;
    let window = ws.window(objective, p);
    let cur =
        inv2(&codebook.states(p)[levels[p]]).ok_or(Error::SingularCell { cell: p, det: 0.0 })?;
    codebook
        .states(p)
        .iter()
        .map(|b| match inv2(b) {
            Some(ci) => woodbury_candidate_loss(&window, &ws.y, &cur, &ci, objective.spec),
            None => Ok(None),
        })
        .collect()
}

/// First single-cell move that strictly lowers the recomputed loss, if any.
pub fn find_improving_move(
    objective: &Objective<'_>,
    codebook: &CellCodebook,
    state: &TuningState,
) -> Result<Option<(usize, usize, f64)>> {
    let base = objective.loss(CellSource::Discrete(codebook), state)?;
    let levels = state
        .levels()
        .ok_or_else(|| Error::Config("expected a discrete state".into()))?;
    for p in 0..levels.len() {
        for l in 0..codebook.states(p).len() {
            if l == levels[p] {
                continue;
            }
            let mut trial = levels.to_vec();
            trial[p] = l;
            let v = objective.loss(
                CellSource::Discrete(codebook),
                &TuningState::Discrete(trial),
            )?;
            if v < base - IMPROVEMENT_TOL * base.max(f64::MIN_POSITIVE) {
                return Ok(Some((p, l, v)));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellModel;
    use crate::linalg::{J, ONE};
    use crate::netcore::{PartitionedScattering, SimTopology};
    use crate::optim::loss::BetaMode;
    use crate::random::{random_matrix, random_passive_scattering};
    use crate::solvers::SimSystem;
    use num_complex::Complex64;

    fn instance(q: usize, k: usize, seed: u64) -> (SimSystem, LossSpec) {
        let t = SimTopology::new(q, k).unwrap();
        let s = random_passive_scattering(2, t.total_ports(), 2, 0.85, seed);
        (
            SimSystem::new(s, t).unwrap(),
            LossSpec::new(random_matrix(2, 2, seed + 1), BetaMode::OptimalRescale),
        )
    }

    #[test]
    fn woodbury_matches_recompute_for_every_candidate() {
        let (sys, spec) = instance(2, 3, 71);
        let book = CellCodebook::quantized(&CellModel::lossy(3.0, 12.0).unwrap(), 8).unwrap();
        let state = TuningState::Discrete(vec![0, 3, 5, 7, 2, 1]);
        let gamma = assemble_gamma(sys.topology(), CellSource::Discrete(&book), &state).unwrap();
        for model in CouplingModel::ALL {
            let obj = Objective::new(&sys, model, &spec).unwrap();
            let ws = Workspace::build(&obj, &gamma).unwrap();
            let levels = state.levels().unwrap();
            for p in 0..6 {
                let window = ws.window(&obj, p);
                let cur = inv2(&book.states(p)[levels[p]]).unwrap();
                for l in 0..8 {
                    let cand = inv2(&book.states(p)[l]).unwrap();
                    let fast = woodbury_candidate_loss(&window, &ws.y, &cur, &cand, &spec)
                        .unwrap()
                        .unwrap();
                    let mut trial = levels.to_vec();
                    trial[p] = l;
                    let exact = obj
                        .loss(CellSource::Discrete(&book), &TuningState::Discrete(trial))
                        .unwrap();
                    assert!(
                        (fast - exact).abs() <= 1e-9 * exact.abs().max(1e-300),
                        "{model:?} p={p} l={l}"
                    );
                }
            }
        }
    }

    #[test]
    fn identity_core_reduces_to_two_by_two() {
        // A = I: X' restricted to the cell ports is (I + C)⁻¹.
        let window = CellWindow {
            k: Block2::identity(),
            p_left: CMatrix::identity(2, 2),
            r_right: CMatrix::identity(2, 2),
            weak: None,
        };
        let c = Block2::new(
            Complex64::new(0.3, 0.1),
            J * 0.2,
            ONE * 0.1,
            Complex64::new(-0.2, 0.4),
        );
        let y = CMatrix::identity(2, 2);
        let out = window.updated_output(&y, &c).unwrap();
        let expected = inv2(&(Block2::identity() + c)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((out[(i, j)] - expected[(i, j)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn unchanged_candidate_keeps_loss() {
        let (sys, spec) = instance(1, 2, 81);
        let obj = Objective::new(&sys, CouplingModel::Ni, &spec).unwrap();
        let book = CellCodebook::uniform_phase(4).unwrap();
        let gamma = assemble_gamma(
            sys.topology(),
            CellSource::Discrete(&book),
            &TuningState::Discrete(vec![1, 2]),
        )
        .unwrap();
        let ws = Workspace::build(&obj, &gamma).unwrap();
        let cur = inv2(&book.states(0)[1]).unwrap();
        let v = woodbury_candidate_loss(&ws.window(&obj, 0), &ws.y, &cur, &cur, &spec)
            .unwrap()
            .unwrap();
        assert_eq!(v, ws.loss);
    }

    #[test]
    fn single_level_codebook_is_a_fixed_point() {
        let (sys, spec) = instance(2, 2, 91);
        let obj = Objective::new(&sys, CouplingModel::I, &spec).unwrap();
        let book = CellCodebook::uniform_phase(1).unwrap();
        let init = TuningState::Discrete(vec![0; 4]);
        let out = coordinate_descent(&obj, &book, &init, 10).unwrap();
        assert_eq!(out.state, init);
        assert_eq!(out.sweeps, 1);
        assert_eq!(out.stop, SweepStop::Converged);
    }

    #[test]
    fn matches_exhaustive_oracle() {
        for seed in [101, 111, 121] {
            let (sys, spec) = instance(2, 2, seed);
            let book = CellCodebook::uniform_phase(4).unwrap();
            for model in CouplingModel::ALL {
                let obj = Objective::new(&sys, model, &spec).unwrap();
                let mut global = f64::INFINITY;
                for code in 0..256usize {
                    let lv = (0..4).map(|p| (code >> (2 * p)) & 3).collect();
                    global = global.min(
                        obj.loss(CellSource::Discrete(&book), &TuningState::Discrete(lv))
                            .unwrap(),
                    );
                }
                let init = TuningState::Discrete(vec![0; 4]);
                let init_loss = obj.loss(CellSource::Discrete(&book), &init).unwrap();
                let out = coordinate_descent(&obj, &book, &init, 50).unwrap();
                assert_eq!(out.stop, SweepStop::Converged);
                assert!(out.loss >= global - 1e-12 && out.loss <= init_loss);
                for w in out.trace.windows(2) {
                    assert!(w[1].loss <= w[0].loss);
                }
                assert!(find_improving_move(&obj, &book, &out.state)
                    .unwrap()
                    .is_none());
                let recomputed = obj.loss(CellSource::Discrete(&book), &out.state).unwrap();
                assert!((recomputed - out.loss).abs() <= 1e-12 * recomputed.max(1.0));
            }
        }
    }

    #[test]
    fn continuous_init_rejected() {
        let (sys, spec) = instance(1, 1, 5);
        let obj = Objective::new(&sys, CouplingModel::Ni, &spec).unwrap();
        let book = CellCodebook::uniform_phase(2).unwrap();
        assert!(coordinate_descent(&obj, &book, &TuningState::Continuous(vec![0.0]), 3).is_err());
    }

    #[test]
    fn scattering_without_coupling_still_factorizes() {
        let t = SimTopology::new(1, 1).unwrap();
        let s = PartitionedScattering::from_links(
            CMatrix::from_element(2, 1, ONE * 0.5),
            CMatrix::zeros(2, 2),
            CMatrix::zeros(1, 1),
            CMatrix::from_element(1, 2, ONE * 0.5),
        )
        .unwrap();
        let sys = SimSystem::new(s, t).unwrap();
        let spec = LossSpec::identity(1, BetaMode::Fixed(ONE));
        let obj = Objective::new(&sys, CouplingModel::I, &spec).unwrap();
        let book = CellCodebook::uniform_phase(4).unwrap();
        let out = coordinate_descent(&obj, &book, &TuningState::Discrete(vec![2]), 5).unwrap();
        assert!(
            out.loss
                <= obj
                    .loss(CellSource::Discrete(&book), &TuningState::Discrete(vec![2]))
                    .unwrap()
        );
    }
}
