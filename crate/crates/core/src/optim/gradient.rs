//! Loss evaluation and adjoint gradients over continuous cell phases.

use num_complex::Complex64;

use crate::cells::{assemble_gamma, CellModel, CellSource, Termination, TuningState};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ZERO};
use crate::netcore::{PartitionedScattering, SimTopology};
use crate::optim::loss::LossSpec;
use crate::solvers::{CouplingModel, SimSystem};

/// A network, a coupling model, an excitation and a target.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    pub system: &'a SimSystem,
    pub model: CouplingModel,
    pub excitation: CMatrix,
    pub spec: &'a LossSpec,
}

/// Loss, gain and gradient at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub beta: Complex64,
    pub gradient: Vec<f64>,
    pub y: CMatrix,
}

impl<'a> Objective<'a> {
    /// Unit excitation of every transmit port (`A_S = I_L`).
    pub fn new(system: &'a SimSystem, model: CouplingModel, spec: &'a LossSpec) -> Result<Self> {
        let (l, _, _) = system.scattering().dims();
        Self::with_excitation(system, model, CMatrix::identity(l, l), spec)
    }

    pub fn with_excitation(
        system: &'a SimSystem,
        model: CouplingModel,
        excitation: CMatrix,
        spec: &'a LossSpec,
    ) -> Result<Self> {
        let (l, _, m) = system.scattering().dims();
        if excitation.nrows() != l {
            return Err(Error::dim("excitation rows", l, excitation.nrows()));
        }
        if spec.y_target.shape() != (m, excitation.ncols()) {
            return Err(Error::dim(
                "loss target",
                format!("({m}, {})", excitation.ncols()),
                format!("{:?}", spec.y_target.shape()),
            ));
        }
        Ok(Self {
            system,
            model,
            excitation,
            spec,
        })
    }

    pub fn topology(&self) -> &SimTopology {
        self.system.topology()
    }

    pub fn output(&self, gamma: &Termination) -> Result<CMatrix> {
        Ok(self.system.respond(self.model, gamma, &self.excitation)?.y)
    }

    pub fn loss_for_gamma(&self, gamma: &Termination) -> Result<(f64, Complex64)> {
        self.spec.evaluate(&self.output(gamma)?)
    }

    pub fn loss(&self, source: CellSource<'_>, state: &TuningState) -> Result<f64> {
        let gamma = assemble_gamma(self.topology(), source, state)?;
        Ok(self.loss_for_gamma(&gamma)?.0)
    }

    /// Loss at continuous phases `eta`, without the adjoint pass.
    pub fn loss_at(&self, cell_model: &CellModel, eta: &[f64]) -> Result<f64> {
        self.loss(
            CellSource::Continuous(cell_model),
            &TuningState::Continuous(eta.to_vec()),
        )
    }

    /// Loss and adjoint gradient with `β` held at its current value.
    pub fn evaluate(&self, cell_model: &CellModel, eta: &[f64]) -> Result<Evaluation> {
        let topology = self.topology();
        let gamma = assemble_gamma(
            topology,
            CellSource::Continuous(cell_model),
            &TuningState::Continuous(eta.to_vec()),
        )?;
        let response = self.system.respond(self.model, &gamma, &self.excitation)?;
        let (loss, beta) = self.spec.evaluate(&response.y)?;
        let residual = self.spec.residual(&response.y, beta);
        let mut gradient = vec![0.0; eta.len()];
        if loss > 0.0 {
            let forcing = self.system.scattering().s_re.adjoint() * (residual * beta.conj());
            let pairs = self.system.adjoint_pairs(&response, &forcing);
            for (p, g) in gradient.iter_mut().enumerate() {
                let t = cell_model.tangent_block(eta[p]);
                let (m, n) = topology.ports(p);
                let mut acc = ZERO;
                for (u, b) in &pairs {
                    for c in 0..u.ncols() {
                        let (bm, bn) = (b[(m, c)], b[(n, c)]);
                        acc += u[(m, c)].conj() * (t[(0, 0)] * bm + t[(0, 1)] * bn)
                            + u[(n, c)].conj() * (t[(1, 0)] * bm + t[(1, 1)] * bn);
                    }
                }
                *g = 2.0 * acc.re;
            }
        }
        Ok(Evaluation {
            loss,
            beta,
            gradient,
            y: response.y,
        })
    }
}

/// Adjoint gradient of the loss for continuous phases `eta`.
pub fn gradient(
    model: CouplingModel,
    s: &PartitionedScattering,
    topology: &SimTopology,
    cell_model: &CellModel,
    eta: &TuningState,
    spec: &LossSpec,
) -> Result<Vec<f64>> {
    let phases = eta
        .phases()
        .ok_or(Error::UnsupportedDerivative("discrete tuning states"))?;
    let system = SimSystem::new(s.clone(), *topology)?;
    Ok(Objective::new(&system, model, spec)?
        .evaluate(cell_model, phases)?
        .gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::loss::BetaMode;
    use crate::random::{random_matrix, random_passive_scattering, random_phases};
    use crate::solvers::split_coupling;

    fn fd_gradient(obj: &Objective<'_>, cell: &CellModel, eta: &[f64], h: f64) -> Vec<f64> {
        (0..eta.len())
            .map(|p| {
                let mut plus = eta.to_vec();
                let mut minus = eta.to_vec();
                plus[p] += h;
                minus[p] -= h;
                let lp = obj
                    .loss(CellSource::Continuous(cell), &TuningState::Continuous(plus))
                    .unwrap();
                let lm = obj
                    .loss(
                        CellSource::Continuous(cell),
                        &TuningState::Continuous(minus),
                    )
                    .unwrap();
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let t = SimTopology::new(3, 4).unwrap();
        let s = random_passive_scattering(2, t.total_ports(), 2, 0.8, 31);
        let sys = SimSystem::new(s, t).unwrap();
        let spec = LossSpec::new(random_matrix(2, 2, 32), BetaMode::OptimalRescale);
        let eta = random_phases(t.total_cells(), 33);
        for cell in [CellModel::IdealPhase, CellModel::lossy(3.0, 15.0).unwrap()] {
            for model in CouplingModel::ALL {
                let obj = Objective::new(&sys, model, &spec).unwrap();
                let g = obj.evaluate(&cell, &eta).unwrap().gradient;
                let fd = fd_gradient(&obj, &cell, &eta, 1e-6);
                assert!(rel_l2(&g, &fd) < 1e-6, "{model:?} {}", rel_l2(&g, &fd));
            }
        }
    }

    #[test]
    fn met_target_has_zero_gradient() {
        let t = SimTopology::new(2, 2).unwrap();
        let s = random_passive_scattering(2, t.total_ports(), 2, 0.8, 41);
        let sys = SimSystem::new(s, t).unwrap();
        let eta = random_phases(t.total_cells(), 42);
        let gamma = assemble_gamma(
            &t,
            CellSource::Continuous(&CellModel::IdealPhase),
            &TuningState::Continuous(eta.clone()),
        )
        .unwrap();
        let y = sys.channel(CouplingModel::Ni, &gamma).unwrap();
        let spec = LossSpec::new(y, BetaMode::Fixed(Complex64::new(1.0, 0.0)));
        let obj = Objective::new(&sys, CouplingModel::Ni, &spec).unwrap();
        let ev = obj.evaluate(&CellModel::IdealPhase, &eta).unwrap();
        assert!(ev.loss < 1e-24);
        assert!(ev.gradient.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn isolated_models_share_gradients() {
        let t = SimTopology::new(3, 2).unwrap();
        let mut s = random_passive_scattering(2, t.total_ports(), 2, 0.8, 51);
        s.s_ee = split_coupling(&s.s_ee, &t).unwrap().s_ee_0;
        let eta = TuningState::Continuous(random_phases(t.total_cells(), 52));
        let spec = LossSpec::new(random_matrix(2, 2, 53), BetaMode::OptimalRescale);
        let reference = gradient(
            CouplingModel::Ni,
            &s,
            &t,
            &CellModel::IdealPhase,
            &eta,
            &spec,
        )
        .unwrap();
        for model in [CouplingModel::I, CouplingModel::W] {
            let g = gradient(model, &s, &t, &CellModel::IdealPhase, &eta, &spec).unwrap();
            assert!(rel_l2(&g, &reference) < 1e-9);
        }
    }

    #[test]
    fn discrete_state_rejected() {
        let t = SimTopology::new(1, 1).unwrap();
        let s = random_passive_scattering(1, 2, 1, 0.8, 1);
        let spec = LossSpec::identity(1, BetaMode::OptimalRescale);
        let r = gradient(
            CouplingModel::Ni,
            &s,
            &t,
            &CellModel::IdealPhase,
            &TuningState::Discrete(vec![0]),
            &spec,
        );
        assert!(matches!(r, Err(Error::UnsupportedDerivative(_))));
    }
}
