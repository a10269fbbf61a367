//! Curl- and divergence-conforming tensor-product B-spline spaces on a box,
//! with optional reduced-continuity separators (rIGA).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::splines::{self, KnotVector, SplineError, UnivariateSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("degree {0} unsupported: vector spaces need p >= 2")]
    UnsupportedDegree(usize),
    #[error("need at least 2 elements per direction, got {0}")]
    TooFewElements(usize),
    #[error("{ne} elements cannot be split into 2^{levels} macroelements of at least 2 elements")]
    Partition { ne: usize, levels: u32 },
    #[error("degenerate geometry: x=[{x0}, {x1}], y=[{y0}, {y1}]")]
    SingularMap { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("point ({0}, {1}) outside the domain")]
    OutsideDomain(f64, f64),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Curl,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

/// Which boundary condition family a mask is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryProblem {
    /// Tangential trace vanishes on every edge.
    Em,
    /// Normal trace vanishes on the rigid edges only.
    Acoustic,
}

/// Axis-aligned box `[x0, x1] × [y0, y1]` (meters); `DF = diag(x1 - x0, y1 - y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl BoxGeometry {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        let g = Self { x, y };
        g.check()?;
        Ok(g)
    }

    pub fn unit() -> Self {
        Self {
            x: [0.0, 1.0],
            y: [0.0, 1.0],
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.x[1] > self.x[0]) || !(self.y[1] > self.y[0]) {
            return Err(SpaceError::SingularMap {
                x0: self.x[0],
                x1: self.x[1],
                y0: self.y[0],
                y1: self.y[1],
            });
        }
        Ok(())
    }

    /// Diagonal of the Jacobian.
    pub fn lengths(&self) -> [f64; 2] {
        [self.x[1] - self.x[0], self.y[1] - self.y[0]]
    }

    pub fn det(&self) -> f64 {
        let [lx, ly] = self.lengths();
        lx * ly
    }

    pub fn to_parametric(&self, pt: [f64; 2]) -> Result<[f64; 2]> {
        let [lx, ly] = self.lengths();
        let u = (pt[0] - self.x[0]) / lx;
        let v = (pt[1] - self.y[0]) / ly;
        let tol = 1e-12;
        if !(-tol..=1.0 + tol).contains(&u) || !(-tol..=1.0 + tol).contains(&v) {
            return Err(SpaceError::OutsideDomain(pt[0], pt[1]));
        }
        Ok([u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)])
    }

    pub fn to_physical(&self, uv: [f64; 2]) -> [f64; 2] {
        let [lx, ly] = self.lengths();
        [self.x[0] + lx * uv[0], self.y[0] + ly * uv[1]]
    }
}

/// Physical value and derivatives of a Piola-mapped vector field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiolaOutput {
    pub value: [f64; 2],
    /// `grad[a][b] = ∂v_a / ∂x_b`
    pub grad: [[f64; 2]; 2],
    pub curl: f64,
    pub div: f64,
}

/// Pushes a parametric field value and its parametric gradient
/// (`grad_hat[a][b] = ∂v̂_a/∂ξ_b`) forward to the physical box.
///
/// Curl kind inverts `ι = DFᵀ (u∘F)`, div kind inverts
/// `ι = det(DF) DF⁻¹ (u∘F)`.
pub fn piola_map(
    kind: SpaceKind,
    geometry: &BoxGeometry,
    value_hat: [f64; 2],
    grad_hat: [[f64; 2]; 2],
) -> Result<PiolaOutput> {
    geometry.check()?;
    let l = geometry.lengths();
    let det = geometry.det();
    let scale = match kind {
        SpaceKind::Curl => [1.0 / l[0], 1.0 / l[1]],
        SpaceKind::Div => [l[0] / det, l[1] / det],
    };
    let value = [scale[0] * value_hat[0], scale[1] * value_hat[1]];
    let mut grad = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            grad[a][b] = scale[a] * grad_hat[a][b] / l[b];
        }
    }
    Ok(PiolaOutput {
        value,
        grad,
        curl: grad[1][0] - grad[0][1],
        div: grad[0][0] + grad[1][1],
    })
}

/// Tensor-product scalar space `B_i(ξ) B_j(η)`; DOF `(i, j)` maps to `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace2D {
    pub sx: UnivariateSpace,
    pub sy: UnivariateSpace,
}

impl TensorSpace2D {
    pub fn nx(&self) -> usize {
        self.sx.n()
    }

    pub fn ny(&self) -> usize {
        self.sy.n()
    }

    pub fn dim(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.sx.degree(), self.sy.degree())
    }
}

/// Macroelement partition: `2^levels` blocks per direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub levels: u32,
    /// Interior breakpoint indices carrying reduced continuity (same in x and y).
    pub separators: Vec<usize>,
}

impl Partition {
    pub fn none() -> Self {
        Self {
            levels: 0,
            separators: Vec::new(),
        }
    }

    pub fn new(ne: usize, levels: u32) -> Result<Self> {
        let blocks = 1usize << levels;
        if ne % blocks != 0 || ne / blocks < 2 {
            return Err(SpaceError::Partition { ne, levels });
        }
        let step = ne / blocks;
        Ok(Self {
            levels,
            separators: (1..blocks).map(|b| b * step).collect(),
        })
    }

    pub fn blocks_per_direction(&self) -> usize {
        1 << self.levels
    }
}

/// Vector-valued B-spline space with x-component DOFs numbered first.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpace {
    pub kind: SpaceKind,
    pub degree: usize,
    pub elements: usize,
    pub comps: [TensorSpace2D; 2],
    pub geometry: BoxGeometry,
    pub partition: Partition,
    constrained: BTreeSet<usize>,
}

fn check_degree(p: usize, ne: usize) -> Result<()> {
    if p < 2 {
        return Err(SpaceError::UnsupportedDegree(p));
    }
    if ne < 2 {
        return Err(SpaceError::TooFewElements(ne));
    }
    Ok(())
}

fn assemble_components(kind: SpaceKind, hi: UnivariateSpace, lo: UnivariateSpace) -> [TensorSpace2D; 2] {
    // (p-1, p) × (p, p-1) for curl; rotated for div
    let a = TensorSpace2D {
        sx: lo.clone(),
        sy: hi.clone(),
    };
    let b = TensorSpace2D { sx: hi, sy: lo };
    match kind {
        SpaceKind::Curl => [a, b],
        SpaceKind::Div => [b, a],
    }
}

/// Maximum-continuity space: degree-p directions are C^{p-1}, degree-(p-1)
/// directions C^{p-2}.
pub fn build_iga_space(kind: SpaceKind, p: usize, ne: usize, geometry: BoxGeometry) -> Result<VectorSpace> {
    check_degree(p, ne)?;
    geometry.check()?;
    let hi = UnivariateSpace::max_continuity(p, ne)?;
    let lo = UnivariateSpace::max_continuity(p - 1, ne)?;
    Ok(VectorSpace {
        kind,
        degree: p,
        elements: ne,
        comps: assemble_components(kind, hi, lo),
        geometry,
        partition: Partition::none(),
        constrained: BTreeSet::new(),
    })
}

/// rIGA space: C¹ separators in degree-p directions and C⁰ separators in
/// degree-(p-1) directions at every macroelement interface.
pub fn build_riga_space(
    kind: SpaceKind,
    p: usize,
    ne: usize,
    levels: u32,
    geometry: BoxGeometry,
) -> Result<VectorSpace> {
    check_degree(p, ne)?;
    geometry.check()?;
    if levels == 0 {
        return build_iga_space(kind, p, ne, geometry);
    }
    let partition = Partition::new(ne, levels)?;
    let hi = splines::raise_separator_multiplicity(
        &UnivariateSpace::max_continuity(p, ne)?,
        &partition.separators,
        1,
    )?;
    let lo = splines::raise_separator_multiplicity(
        &UnivariateSpace::max_continuity(p - 1, ne)?,
        &partition.separators,
        0,
    )?;
    Ok(VectorSpace {
        kind,
        degree: p,
        elements: ne,
        comps: assemble_components(kind, hi, lo),
        geometry,
        partition,
        constrained: BTreeSet::new(),
    })
}

/// Partition levels that give macroelements of `size × size` elements.
pub fn levels_for_macroelement(ne: usize, size: usize) -> Option<u32> {
    if size == 0 || ne % size != 0 {
        return None;
    }
    let blocks = ne / size;
    blocks.is_power_of_two().then(|| blocks.trailing_zeros())
}

impl VectorSpace {
    pub fn nx_dofs(&self) -> usize {
        self.comps[0].dim()
    }

    pub fn ny_dofs(&self) -> usize {
        self.comps[1].dim()
    }

    /// Total DOFs including constrained ones.
    pub fn n(&self) -> usize {
        self.nx_dofs() + self.ny_dofs()
    }

    pub fn dof(&self, comp: usize, i: usize, j: usize) -> usize {
        let off = if comp == 0 { 0 } else { self.nx_dofs() };
        off + self.comps[comp].index(i, j)
    }

    /// `(component, i, j)` of a global DOF.
    pub fn locate(&self, dof: usize) -> (usize, usize, usize) {
        let (c, local) = if dof < self.nx_dofs() {
            (0, dof)
        } else {
            (1, dof - self.nx_dofs())
        };
        let nx = self.comps[c].nx();
        (c, local % nx, local / nx)
    }

    pub fn is_riga(&self) -> bool {
        self.partition.levels > 0
    }

    pub fn constrained(&self) -> &BTreeSet<usize> {
        &self.constrained
    }

    pub fn with_constraints(mut self, mask: BTreeSet<usize>) -> Self {
        self.constrained = mask;
        self
    }

    /// Unconstrained DOFs in ascending order.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n()).filter(|d| !self.constrained.contains(d)).collect()
    }

    /// Parametric value and gradient of basis `dof` at `(ξ, η)`.
    pub fn basis_parametric(&self, dof: usize, uv: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (c, i, j) = self.locate(dof);
        let t = &self.comps[c];
        let (bx, dbx) = scalar_and_derivative(t.sx.knot_vector(), i, uv[0]);
        let (by, dby) = scalar_and_derivative(t.sy.knot_vector(), j, uv[1]);
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        val[c] = bx * by;
        grad[c] = [dbx * by, bx * dby];
        (val, grad)
    }

    /// Physical value/curl/div of basis `dof` at a physical point.
    pub fn basis_physical(&self, dof: usize, pt: [f64; 2]) -> Result<PiolaOutput> {
        let uv = self.geometry.to_parametric(pt)?;
        let (v, g) = self.basis_parametric(dof, uv);
        piola_map(self.kind, &self.geometry, v, g)
    }

    /// Component index carrying the normal trace on `edge`.
    pub fn normal_component(&self, edge: Edge) -> usize {
        match edge {
            Edge::Left | Edge::Right => 0,
            Edge::Bottom | Edge::Top => 1,
        }
    }

    /// Global DOFs of component `comp` whose basis is the first/last in the
    /// direction normal to `edge`.
    pub fn edge_dofs(&self, comp: usize, edge: Edge) -> Vec<usize> {
        let t = &self.comps[comp];
        let (nx, ny) = (t.nx(), t.ny());
        match edge {
            Edge::Left => (0..ny).map(|j| self.dof(comp, 0, j)).collect(),
            Edge::Right => (0..ny).map(|j| self.dof(comp, nx - 1, j)).collect(),
            Edge::Bottom => (0..nx).map(|i| self.dof(comp, i, 0)).collect(),
            Edge::Top => (0..nx).map(|i| self.dof(comp, i, ny - 1)).collect(),
        }
    }
}

fn scalar_and_derivative(kv: &KnotVector, i: usize, u: f64) -> (f64, f64) {
    let span = kv.find_span(u).expect("parameter checked by caller");
    let p = kv.degree();
    if i + p < span || i > span {
        return (0.0, 0.0);
    }
    let d = kv.derivatives_at_span(span, u, 1);
    (d[0][i + p - span], d[1][i + p - span])
}

/// DOFs to eliminate: tangential traces on all edges for `Em`, normal traces
/// on `rigid_edges` for `Acoustic`.
pub fn boundary_mask(space: &VectorSpace, problem: BoundaryProblem, rigid_edges: &[Edge]) -> BTreeSet<usize> {
    let mut mask = BTreeSet::new();
    match problem {
        BoundaryProblem::Em => {
            for edge in Edge::ALL {
                // tangential component is the one not normal to the edge
                let comp = match space.kind {
                    SpaceKind::Curl => 1 - space.normal_component(edge),
                    SpaceKind::Div => space.normal_component(edge),
                };
                mask.extend(space.edge_dofs(comp, edge));
            }
        }
        BoundaryProblem::Acoustic => {
            for &edge in rigid_edges {
                let comp = match space.kind {
                    SpaceKind::Div => space.normal_component(edge),
                    SpaceKind::Curl => 1 - space.normal_component(edge),
                };
                mask.extend(space.edge_dofs(comp, edge));
            }
        }
    }
    mask
}
