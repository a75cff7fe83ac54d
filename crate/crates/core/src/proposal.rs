//! Proposal distributions: the dented uniform, the (dented) Gaussian
//! mixture, their mixing weights, and the rejection samplers that draw
//! from them.
//!
//! Samplers never compute normalizers. A dented draw repeatedly draws from
//! the undented base distribution until it lands on a free cell, giving up
//! after `max_attempts` tries. The exact normalized densities exist for
//! verification and cost a full pass over the space.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::RegionBook;
use crate::rng::Rng;
use crate::scorer::normalize_weights;
use crate::space::{SearchSpace, Window};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum ProposalError {
    #[error("cannot sample from an empty Gaussian mixture")]
    EmptyMixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub p_uniform: f64,
    pub p_gaussian: f64,
}

/// `P_u = alpha * (1 - (N_R + N_A) / N)`, `P_g = 1 - P_u`.
pub fn mixture_weights(alpha: f64, n_rejected: u64, n_accepted: u64, total: u64) -> MixtureWeights {
    let visited = if total == 0 { 1.0 } else { (n_rejected + n_accepted) as f64 / total as f64 };
    let p_uniform = alpha * (1.0 - visited);
    MixtureWeights { p_uniform, p_gaussian: 1.0 - p_uniform }
}

/// Draws from the plain uniform over all `N` windows. `N` must be positive.
pub fn sample_uniform(space: &SearchSpace, rng: &mut Rng) -> Window {
    space.window_at(rng.random_range(0..space.window_count()))
}

/// Draws a free window from the dented uniform, or `None` after
/// `max_attempts` draws all landed on marked cells.
pub fn sample_dented_uniform(
    book: &RegionBook,
    space: &SearchSpace,
    rng: &mut Rng,
    max_attempts: u32,
) -> Option<Window> {
    if book.free_count() == 0 {
        return None;
    }
    (0..max_attempts).map(|_| sample_uniform(space, rng)).find(|&w| book.is_free(w))
}

/// Gaussian width per component: positional standard deviations are the
/// template size at the component's scale divided by `divisor` (original
/// pixels), `scale` is in scale steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spread {
    pub divisor: f64,
    pub scale: f64,
}

impl Default for Spread {
    fn default() -> Self {
        Self { divisor: 8.0, scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub mean: Window,
    pub weight: f64,
    /// Standard deviations `(x, y)` in original pixels and `s` in steps.
    pub sigma: (f64, f64, f64),
}

/// Response-weighted Gaussian mixture over the window grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
    cumulative: Vec<f64>,
}

impl GaussianMixture {
    /// Builds a mixture from scored particles; weights are the normalized
    /// responses.
    pub fn from_particles(space: &SearchSpace, particles: &[(Window, f64)], spread: Spread) -> Self {
        let responses: Vec<f64> = particles.iter().map(|p| p.1).collect();
        let weights = normalize_weights(&responses);
        let (tw, th) = space.template();
        let components = particles
            .iter()
            .zip(weights)
            .map(|(&(mean, _), weight)| {
                let zoom = space.zoom(mean.s);
                Component {
                    mean,
                    weight,
                    sigma: (tw as f64 * zoom / spread.divisor, th as f64 * zoom / spread.divisor, spread.scale),
                }
            })
            .collect();
        Self::from_components(components)
    }

    pub fn from_components(components: Vec<Component>) -> Self {
        let mut acc = 0.0;
        let cumulative = components
            .iter()
            .map(|c| {
                acc += c.weight;
                acc
            })
            .collect();
        Self { components, cumulative }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Picks a component with probability proportional to its weight.
    pub fn pick(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty mixture");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.components.len() - 1)
    }

    /// One undented draw: a Gaussian step around the picked component's
    /// center, rounded to the nearest scale and grid cell and clamped to the
    /// space. `None` when the drawn scale has no windows.
    pub fn draw(&self, space: &SearchSpace, rng: &mut Rng) -> (usize, Option<Window>) {
        let k = self.pick(rng);
        let c = &self.components[k];
        let center = space.to_box(c.mean);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let ns: f64 = rng.sample(StandardNormal);
        let top = space.scale_count() as f64 - 1.0;
        let s = (c.mean.s as f64 + c.sigma.2 * ns).round().clamp(0.0, top) as u32;
        let (cols, rows) = space.grid(s);
        if cols == 0 || rows == 0 {
            return (k, None);
        }
        let (x, y) = space.locate(center.cx + c.sigma.0 * nx, center.cy + c.sigma.1 * ny, s);
        let x = x.clamp(0, cols as i64 - 1) as u32;
        let y = y.clamp(0, rows as i64 - 1) as u32;
        (k, Some(Window::new(x, y, s)))
    }

    /// Undented draw, retrying only draws that fall on an empty scale.
    pub fn sample_full(&self, space: &SearchSpace, rng: &mut Rng, max_attempts: u32) -> Option<Window> {
        if self.is_empty() {
            return None;
        }
        (0..max_attempts).find_map(|_| self.draw(space, rng).1)
    }

    fn kernel(c: &Component, space: &SearchSpace, w: Window) -> f64 {
        let mean = space.to_box(c.mean);
        let b = space.to_box(w);
        let z = |d: f64, sigma: f64| if sigma > 0.0 { d / sigma } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        let zx = z(b.cx - mean.cx, c.sigma.0);
        let zy = z(b.cy - mean.cy, c.sigma.1);
        let zs = z(w.s as f64 - c.mean.s as f64, c.sigma.2);
        (-0.5 * (zx * zx + zy * zy + zs * zs)).exp()
    }
}

/// Draws a free window from the mixture dented by `book`. `Ok(None)` after
/// `max_attempts` draws all landed on marked cells or off the grid.
pub fn sample_dented_gaussian(
    mixture: &GaussianMixture,
    book: &RegionBook,
    space: &SearchSpace,
    rng: &mut Rng,
    max_attempts: u32,
) -> Result<Option<Window>, ProposalError> {
    if mixture.is_empty() {
        return Err(ProposalError::EmptyMixture);
    }
    if book.free_count() == 0 {
        return Ok(None);
    }
    Ok((0..max_attempts).find_map(|_| mixture.draw(space, rng).1.filter(|&w| book.is_free(w))))
}

/// Exact discrete density over the window grid.
pub trait Density {
    fn density_at(&self, w: Window) -> f64;
}

/// `1 / free_count` on free cells, 0 on marked cells.
pub struct DentedUniform<'a> {
    book: &'a RegionBook,
}

impl<'a> DentedUniform<'a> {
    pub fn new(book: &'a RegionBook) -> Self {
        Self { book }
    }

    pub fn normalizer(&self) -> u64 {
        self.book.free_count()
    }
}

impl Density for DentedUniform<'_> {
    fn density_at(&self, w: Window) -> f64 {
        match self.book.free_count() {
            0 => 0.0,
            a if self.book.is_free(w) => 1.0 / a as f64,
            _ => 0.0,
        }
    }
}

/// Dented Gaussian mixture with each component renormalized over the free
/// cells. Components with no free mass are dropped and the remaining
/// weights rescaled.
pub struct DentedGaussianDensity<'a> {
    mixture: &'a GaussianMixture,
    book: &'a RegionBook,
    space: &'a SearchSpace,
    scaled_weights: Vec<f64>,
}

impl<'a> DentedGaussianDensity<'a> {
    pub fn new(mixture: &'a GaussianMixture, book: &'a RegionBook, space: &'a SearchSpace) -> Self {
        let masses: Vec<f64> = mixture
            .components
            .iter()
            .map(|c| {
                space
                    .enumerate_all()
                    .filter(|&w| book.is_free(w))
                    .map(|w| GaussianMixture::kernel(c, space, w))
                    .sum()
            })
            .collect();
        let live: f64 = mixture.components.iter().zip(&masses).filter(|(_, &m)| m > 0.0).map(|(c, _)| c.weight).sum();
        let scaled_weights = mixture
            .components
            .iter()
            .zip(&masses)
            .map(|(c, &m)| if m > 0.0 && live > 0.0 { c.weight / live / m } else { 0.0 })
            .collect();
        Self { mixture, book, space, scaled_weights }
    }
}

impl Density for DentedGaussianDensity<'_> {
    fn density_at(&self, w: Window) -> f64 {
        if !self.book.is_free(w) {
            return 0.0;
        }
        self.mixture
            .components
            .iter()
            .zip(&self.scaled_weights)
            .filter(|(_, &sw)| sw > 0.0)
            .map(|(c, &sw)| sw * GaussianMixture::kernel(c, self.space, w))
            .sum()
    }
}
