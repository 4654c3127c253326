use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("origin is not strictly inside the domain")]
    OriginNotInterior,
    #[error("polygon is self-intersecting")]
    SelfIntersecting,
    #[error("polygon must be counterclockwise with at least 3 vertices")]
    BadPolygon,
    #[error("symmetry tag {0} does not hold for this domain")]
    SymmetryFails(String),
    #[error("pole at distance {0} is not strictly inside the domain")]
    PoleOutside(f64),
    #[error("crack ray exits the domain degenerately: {0}")]
    DegenerateClipping(String),
    #[error("mesh quality failure: {0}")]
    MeshQuality(String),
    #[error("mesh format error: {0}")]
    MeshFormat(String),
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no dominant mode in local expansion: {0}")]
    NoDominantMode(String),
    #[error("inconsistent vanishing order between radii: {0} vs {1}")]
    InconsistentOrder(u32, u32),
    #[error("imaginary residue {0:.3e} exceeds tolerance")]
    NotReal(f64),
    #[error("sampling point ({0}, {1}) not inside mesh")]
    PointOutside(f64, f64),
    #[error("non-monotone truncation tail: {0}")]
    NonMonotone(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("basis case mismatch: {0}")]
    BasisCaseMismatch(String),
    #[error("insufficient resolution of the segment between origin and pole: {0} pairs")]
    InsufficientResolution(usize),
    #[error("window misidentified: {0}")]
    Window(String),
    #[error("power fit: {0}")]
    Fit(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
