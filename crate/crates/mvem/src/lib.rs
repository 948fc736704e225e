//! Mixed virtual element solver for advection-diffusion-reaction problems
//! on polygonal meshes.
//!
//! The velocity space is an H(div)-conforming virtual space with edge and
//! internal moment degrees of freedom; the pressure space is piecewise
//! polynomial. Three strategies are available for the polynomial bases used
//! in the local projections:
//!
//! * [`Approach::Monomial`] -- scaled monomials throughout,
//! * [`Approach::Partial`] -- an L2-orthonormal scalar basis obtained by a
//!   double modified Gram-Schmidt pass, which orthonormalizes the
//!   complement part of the vector basis,
//! * [`Approach::Ortho`] -- additionally orthonormalizes the gradient part
//!   of the vector basis so its mass matrix is the identity.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod global;
pub mod local;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod scalar_basis;
pub mod vector_basis;

pub use error::{Error, Result};

/// Strategy used to represent the scalar and vector polynomial bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Approach {
    /// Scaled monomials for both the scalar and the vector basis.
    Monomial,
    /// L2-orthonormal scalar basis; vector basis only partially orthonormal.
    Partial,
    /// Fully L2-orthonormal vector basis (gradient part orthonormalized too).
    Ortho,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Monomial, Approach::Partial, Approach::Ortho];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Monomial => "monomial",
            Approach::Partial => "partial",
            Approach::Ortho => "ortho",
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monomial" => Ok(Approach::Monomial),
            "partial" => Ok(Approach::Partial),
            "ortho" => Ok(Approach::Ortho),
            other => Err(Error::InvalidArgument(format!(
                "unknown approach '{other}' (expected monomial, partial or ortho)"
            ))),
        }
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
