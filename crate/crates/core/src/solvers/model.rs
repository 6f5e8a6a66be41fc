//! Forward and adjoint evaluation under the three coupling models.

use serde::{Deserialize, Serialize};

use crate::cells::Termination;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, DenseLu, DEFAULT_CONDITION_CAP, ZERO};
use crate::netcore::{fixed_point_lu, PartitionedScattering, SimTopology, WaveBatch};
use crate::solvers::coupling::{
    isolated_system, neumann_parts, split_coupling, CouplingDecomposition,
};
use crate::solvers::thomas::{thomas_factorize, BlockTridiagonal, ThomasFactorization};

/// How much of the internal coupling a computation accounts for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingModel {
    /// Full dense `S_EE`.
    Ni,
    /// Layered-isolated: `S_EE⁽⁰⁾` only, block-Thomas solves over layers.
    I,
    /// Weakly coupled: `S_EE⁽⁰⁾` plus first-order `ΔS` correction.
    W,
}

impl CouplingModel {
    pub const ALL: [CouplingModel; 3] = [CouplingModel::Ni, CouplingModel::I, CouplingModel::W];

    pub fn name(&self) -> &'static str {
        match self {
            CouplingModel::Ni => "ni",
            CouplingModel::I => "i",
            CouplingModel::W => "w",
        }
    }
}

impl std::str::FromStr for CouplingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ni" | "sim-ni" => Ok(CouplingModel::Ni),
            "i" | "sim-i" => Ok(CouplingModel::I),
            "w" | "sim-w" => Ok(CouplingModel::W),
            other => Err(Error::Config(format!(
                "unknown coupling model '{other}' (expected ni, i or w)"
            ))),
        }
    }
}

/// A scattering network prepared for repeated evaluation.
#[derive(Clone, Debug)]
pub struct SimSystem {
    scattering: PartitionedScattering,
    topology: SimTopology,
    decomposition: CouplingDecomposition,
    isolated_base: BlockTridiagonal,
    /// `S_RE` only sees the last transmit array.
    links_confined: bool,
    pub condition_cap: f64,
}

impl SimSystem {
    pub fn new(scattering: PartitionedScattering, topology: SimTopology) -> Result<Self> {
        scattering.validate()?;
        let (_, n, _) = scattering.dims();
        if n != topology.total_ports() {
            return Err(Error::dim("SIM ports", topology.total_ports(), n));
        }
        let decomposition = split_coupling(&scattering.s_ee, &topology)?;
        let isolated_base = decomposition.static_system();
        let k = topology.cells_per_layer();
        let last = (topology.arrays() - 1) * k;
        let links_confined = scattering
            .s_re
            .column_iter()
            .enumerate()
            .all(|(j, c)| j >= last || c.iter().all(|v| *v == ZERO));
        Ok(Self {
            scattering,
            topology,
            decomposition,
            isolated_base,
            links_confined,
            condition_cap: DEFAULT_CONDITION_CAP,
        })
    }

    pub fn scattering(&self) -> &PartitionedScattering {
        &self.scattering
    }

    pub fn topology(&self) -> &SimTopology {
        &self.topology
    }

    pub fn decomposition(&self) -> &CouplingDecomposition {
        &self.decomposition
    }

    pub fn links_confined(&self) -> bool {
        self.links_confined
    }

    /// `Γ⁻¹ − S_EE⁽⁰⁾` as a block-tridiagonal matrix of `Q` layer blocks.
    pub fn isolated_core(&self, gamma_inv: &Termination) -> BlockTridiagonal {
        isolated_system(&self.isolated_base, gamma_inv)
    }

    /// Forward evaluation for excitations `a_s`.
    pub fn respond(
        &self,
        model: CouplingModel,
        gamma: &Termination,
        a_s: &CMatrix,
    ) -> Result<Response> {
        let s = &self.scattering;
        self.respond_fields(model, gamma, &(&s.s_et * a_s), &s.s_rt * a_s)
    }

    /// Forward evaluation for a given incident field `S_ET A_S` and direct
    /// path `S_RT A_S`, for sources that are not columns of `S_ET`.
    pub fn respond_fields(
        &self,
        model: CouplingModel,
        gamma: &Termination,
        incident: &CMatrix,
        direct: CMatrix,
    ) -> Result<Response> {
        let s = &self.scattering;
        let n = self.topology.total_ports();
        if incident.nrows() != n {
            return Err(Error::dim("incident field rows", n, incident.nrows()));
        }
        if direct.nrows() != s.s_re.nrows() || direct.ncols() != incident.ncols() {
            return Err(Error::dim(
                "direct path",
                format!("{}x{}", s.s_re.nrows(), incident.ncols()),
                format!("{}x{}", direct.nrows(), direct.ncols()),
            ));
        }
        match model {
            CouplingModel::Ni => {
                let lu = fixed_point_lu(s, gamma, self.condition_cap)?;
                let a_e = lu.solve(&gamma.apply(incident));
                let b_e = incident + &s.s_ee * &a_e;
                let y = direct + &s.s_re * &a_e;
                Ok(Response {
                    y,
                    a_e,
                    b_e,
                    kind: Kernel::Dense { lu },
                })
            }
            CouplingModel::I => {
                let gamma_inv = gamma.inverse()?;
                let fact = thomas_factorize(&self.isolated_core(&gamma_inv))?;
                let a_e = fact.solve(incident);
                let b_e = gamma_inv.apply(&a_e);
                let y = direct + &s.s_re * &a_e;
                Ok(Response {
                    y,
                    a_e,
                    b_e,
                    kind: Kernel::Isolated { fact, gamma_inv },
                })
            }
            CouplingModel::W => {
                let gamma_inv = gamma.inverse()?;
                let fact = thomas_factorize(&self.isolated_core(&gamma_inv))?;
                let (x, contraction) = neumann_parts(&fact, &self.decomposition.delta_s);
                let f1 = &x * incident;
                let f2 = &x * (&self.decomposition.delta_s * &f1);
                let a_e = &f1 + &f2;
                let b_e = gamma_inv.apply(&a_e);
                let y = direct + &s.s_re * &a_e;
                Ok(Response {
                    y,
                    a_e,
                    b_e,
                    kind: Kernel::Weak {
                        x,
                        f1,
                        gamma_inv,
                        contraction,
                    },
                })
            }
        }
    }

    /// SIM-I channel from the corner block `X[last, first]` of the core
    /// inverse, built from one column strip; needs links confined to the
    /// outer arrays.
    pub fn channel_via_strips(&self, gamma: &Termination) -> Result<CMatrix> {
        let s = &self.scattering;
        let first_rows = 2 * self.topology.cells_per_layer();
        let n = self.topology.total_ports();
        if !self.links_confined
            || s.s_et
                .rows(first_rows, n - first_rows)
                .iter()
                .any(|v| *v != ZERO)
        {
            return Err(Error::Unsupported(
                "strip evaluation needs S_ET on the first layer and S_RE on the last layer only"
                    .into(),
            ));
        }
        let fact = thomas_factorize(&self.isolated_core(&gamma.inverse()?))?;
        let b = fact.block_size();
        let last = fact.block_count() - 1;
        let strip = &fact.solve_columns(&[0])?[0];
        let corner = strip.rows(last * b, b);
        Ok(&s.s_rt + s.s_re.columns(last * b, b) * corner * s.s_et.rows(0, b))
    }

    /// End-to-end channel for unit excitations, `Y` with `A_S = I_L`.
    pub fn channel(&self, model: CouplingModel, gamma: &Termination) -> Result<CMatrix> {
        let (l, _, _) = self.scattering.dims();
        Ok(self.respond(model, gamma, &CMatrix::identity(l, l))?.y)
    }

    /// Adjoint pairs `(U, B)` with `∂L/∂η_p = Σ 2 Re⟨U, T_p B⟩` for forcing `q = S_REᴴ(β* E)`.
    pub fn adjoint_pairs(&self, response: &Response, forcing: &CMatrix) -> Vec<(CMatrix, CMatrix)> {
        match &response.kind {
            Kernel::Dense { lu } => vec![(lu.solve_adjoint(forcing), response.b_e.clone())],
            Kernel::Isolated { fact, gamma_inv } => {
                vec![(
                    gamma_inv.apply_adjoint(&fact.solve_adjoint(forcing)),
                    response.b_e.clone(),
                )]
            }
            Kernel::Weak {
                x, f1, gamma_inv, ..
            } => {
                let xh = x.adjoint();
                let g1 = &xh * forcing;
                let g2 = &xh * (self.decomposition.delta_s.adjoint() * &g1);
                vec![
                    (gamma_inv.apply_adjoint(&g1), response.b_e.clone()),
                    (gamma_inv.apply_adjoint(&g2), gamma_inv.apply(f1)),
                ]
            }
        }
    }
}

/// Model-specific state kept from the forward pass for the adjoint pass.
#[derive(Clone, Debug)]
pub(crate) enum Kernel {
    Dense {
        lu: DenseLu,
    },
    Isolated {
        fact: ThomasFactorization,
        gamma_inv: Termination,
    },
    Weak {
        x: CMatrix,
        f1: CMatrix,
        gamma_inv: Termination,
        contraction: f64,
    },
}

/// Outputs and internal waves of one forward evaluation.
#[derive(Clone, Debug)]
pub struct Response {
    pub y: CMatrix,
    pub a_e: CMatrix,
    pub b_e: CMatrix,
    pub(crate) kind: Kernel,
}

impl Response {
    /// Measured `‖A⁻¹ΔS‖` for the weakly coupled model.
    pub fn contraction(&self) -> Option<f64> {
        match self.kind {
            Kernel::Weak { contraction, .. } => Some(contraction),
            _ => None,
        }
    }

    pub fn into_wave_batch(self, a_s: &CMatrix, exact: bool) -> WaveBatch {
        WaveBatch {
            a_s: a_s.clone(),
            a_e: self.a_e,
            b_e: self.b_e,
            y: self.y,
            solved: exact,
        }
    }
}

/// Dense LU of `Γ⁻¹ − S_EE` (used by the discrete optimizer under SIM-NI).
pub(crate) fn dense_core_lu(gamma_inv: &Termination, s_ee: &CMatrix, cap: f64) -> Result<DenseLu> {
    DenseLu::with_condition_cap(&(gamma_inv.to_dense() - s_ee), cap)
}
