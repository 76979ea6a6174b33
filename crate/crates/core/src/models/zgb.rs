//! Ziff–Gulari–Barshad CO oxidation on a periodic square lattice, without
//! diffusion.
//!
//! Spins: −1 = CO, 0 = vacant, +1 = O. Per-site events with θ = [k₁, k₂]:
//!
//! 1. CO adsorption on a vacant site: `k₁`
//! 2. O₂ dissociative adsorption on a vacant site and a vacant neighbour:
//!    `(1−k₁)·(#vacant n.n.)/4`
//! 3. CO at the site reacts with an O neighbour, both desorb:
//!    `k₂·(#O n.n.)/4`
//! 4. O at the site reacts with a CO neighbour, both desorb:
//!    `k₂·(#CO n.n.)/4`

use crate::error::{check_len, Error, Result};
use crate::models::JumpModel;
use crate::rng::RngStream;
use crate::trajectory::EventId;

pub const CO: i8 = -1;
pub const VACANT: i8 = 0;
pub const O: i8 = 1;

pub const ADSORB_CO: usize = 0;
pub const ADSORB_O2: usize = 1;
pub const CO_REACTS: usize = 2;
pub const O_REACTS: usize = 3;

/// L×L periodic lattice of spins.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ZgbLattice {
    side: usize,
    spins: Vec<i8>,
}

impl ZgbLattice {
    pub fn empty(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice side must be at least 2, got {side}"
            )));
        }
        Ok(Self {
            side,
            spins: vec![VACANT; side * side],
        })
    }

    pub fn from_spins(side: usize, spins: Vec<i8>) -> Result<Self> {
        let mut lat = Self::empty(side)?;
        check_len("lattice spins", side * side, spins.len())?;
        if let Some(s) = spins.iter().find(|s| !(-1..=1).contains(*s)) {
            return Err(Error::InvalidParameter(format!("invalid spin value {s}")));
        }
        lat.spins = spins;
        Ok(lat)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, site: usize) -> i8 {
        self.spins[site]
    }

    pub fn set(&mut self, site: usize, spin: i8) {
        self.spins[site] = spin;
    }

    /// Left, right, up, down neighbours with periodic wrap.
    pub fn neighbors(&self, site: usize) -> [usize; 4] {
        let l = self.side;
        let (r, c) = (site / l, site % l);
        [
            r * l + (c + l - 1) % l,
            r * l + (c + 1) % l,
            ((r + l - 1) % l) * l + c,
            ((r + 1) % l) * l + c,
        ]
    }

    pub fn count_neighbors(&self, site: usize, spin: i8) -> usize {
        self.neighbors(site)
            .iter()
            .filter(|&&n| self.spins[n] == spin)
            .count()
    }

    /// Fractions of CO, vacant and O sites.
    pub fn coverage(&self) -> [f64; 3] {
        let n = self.spins.len() as f64;
        let count = |s: i8| self.spins.iter().filter(|&&x| x == s).count() as f64 / n;
        [count(CO), count(VACANT), count(O)]
    }

    /// One text row per lattice row, spins as `C`, `.`, `O`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.spins.len() + self.side);
        for row in self.spins.chunks(self.side) {
            for &s in row {
                out.push(match s {
                    CO => 'C',
                    O => 'O',
                    _ => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    /// The lattice translated by (dr, dc) with periodic wrap.
    pub fn translated(&self, dr: usize, dc: usize) -> Self {
        let l = self.side;
        let mut spins = vec![VACANT; l * l];
        for r in 0..l {
            for c in 0..l {
                spins[((r + dr) % l) * l + (c + dc) % l] = self.spins[r * l + c];
            }
        }
        Self { side: l, spins }
    }
}

/// Rates of the four events at `site` under θ = [k₁, k₂].
pub fn zgb_site_rates(lattice: &ZgbLattice, site: usize, theta: &[f64]) -> [f64; 4] {
    let (k1, k2) = (theta[0], theta[1]);
    match lattice.get(site) {
        VACANT => {
            let vac = lattice.count_neighbors(site, VACANT) as f64;
            [k1, (1.0 - k1) * vac / 4.0, 0.0, 0.0]
        }
        CO => {
            let ox = lattice.count_neighbors(site, O) as f64;
            [0.0, 0.0, k2 * ox / 4.0, 0.0]
        }
        _ => {
            let co = lattice.count_neighbors(site, CO) as f64;
            [0.0, 0.0, 0.0, k2 * co / 4.0]
        }
    }
}

/// ∇_θ log c_k; independent of the configuration.
pub fn zgb_log_gradient(event: usize, theta: &[f64]) -> [f64; 2] {
    match event {
        ADSORB_CO => [1.0 / theta[0], 0.0],
        ADSORB_O2 => [-1.0 / (1.0 - theta[0]), 0.0],
        _ => [0.0, 1.0 / theta[1]],
    }
}

/// Applies event `event` at `site`. Multisite events pick their partner
/// uniformly among eligible neighbours with one RNG draw. Returns the
/// changed sites.
pub fn zgb_execute(
    lattice: &mut ZgbLattice,
    site: usize,
    event: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let spin = lattice.get(site);
    let (required, partner_spin, new_site, new_partner) = match event {
        ADSORB_CO => {
            if spin != VACANT {
                return Err(Error::Inconsistent(format!("CO adsorption on occupied site {site}")));
            }
            lattice.set(site, CO);
            return Ok(vec![site]);
        }
        ADSORB_O2 => (VACANT, VACANT, O, O),
        CO_REACTS => (CO, O, VACANT, VACANT),
        O_REACTS => (O, CO, VACANT, VACANT),
        e => return Err(Error::InvalidParameter(format!("ZGB event index {e} out of range"))),
    };
    if spin != required {
        return Err(Error::Inconsistent(format!(
            "event {} not applicable at site {site} with spin {spin}",
            event + 1
        )));
    }
    let eligible: Vec<usize> = lattice
        .neighbors(site)
        .into_iter()
        .filter(|&n| lattice.get(n) == partner_spin)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Inconsistent(format!(
            "event {} at site {site} has no eligible neighbour",
            event + 1
        )));
    }
    let partner = eligible[rng.index(eligible.len())];
    lattice.set(site, new_site);
    lattice.set(partner, new_partner);
    Ok(vec![site, partner])
}

/// θ = [k₁, k₂] with 0 < k₁ < 1, k₂ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zgb {
    pub side: usize,
}

impl Default for Zgb {
    fn default() -> Self {
        Self { side: 64 }
    }
}

impl Zgb {
    pub const DEFAULT_THETA: [f64; 2] = [0.35, 0.85];
    pub const PARAM_NAMES: [&'static str; 2] = ["k1", "k2"];

    pub fn empty_lattice(&self) -> Result<ZgbLattice> {
        ZgbLattice::empty(self.side)
    }

    /// Sorted, deduplicated union of `changed` and their neighbours.
    pub fn affected_sites(lattice: &ZgbLattice, changed: &[usize], out: &mut Vec<usize>) {
        out.clear();
        for &s in changed {
            out.push(s);
            out.extend_from_slice(&lattice.neighbors(s));
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Sites whose spin differs between two lattices of equal size.
    pub fn changed_sites(before: &ZgbLattice, after: &ZgbLattice) -> Vec<usize> {
        before
            .spins
            .iter()
            .zip(&after.spins)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }
}

impl JumpModel for Zgb {
    type State = ZgbLattice;

    fn num_params(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        Self::PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        check_len("ZGB parameters", 2, theta.len())?;
        if !(theta[0] > 0.0 && theta[0] < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "k1 = {} must lie in (0, 1)",
                theta[0]
            )));
        }
        if !(theta[1] > 0.0) || !theta[1].is_finite() {
            return Err(Error::InvalidParameter(format!(
                "k2 = {} must be strictly positive",
                theta[1]
            )));
        }
        Ok(())
    }

    fn num_groups(&self, state: &ZgbLattice) -> usize {
        state.len()
    }

    fn events_per_group(&self) -> usize {
        4
    }

    fn group_rates(&self, state: &ZgbLattice, group: usize, theta: &[f64], rates: &mut [f64]) {
        rates[..4].copy_from_slice(&zgb_site_rates(state, group, theta));
    }

    fn log_rate_gradient(&self, state: &ZgbLattice, id: EventId, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        if zgb_site_rates(state, id.group, theta)[id.event] <= 0.0 {
            return Err(Error::UndefinedGradient(format!(
                "event {} at site {} has zero rate",
                id.event + 1,
                id.group
            )));
        }
        grad[..2].copy_from_slice(&zgb_log_gradient(id.event, theta));
        Ok(())
    }

    fn execute(
        &self,
        state: &mut ZgbLattice,
        id: EventId,
        rng: &mut RngStream,
        touched: &mut Vec<usize>,
    ) -> Result<()> {
        let changed = zgb_execute(state, id.group, id.event, rng)?;
        Self::affected_sites(state, &changed, touched);
        Ok(())
    }

    fn describe_event(&self, _state: &ZgbLattice, id: EventId) -> String {
        format!("site {} event {}", id.group, id.event + 1)
    }

    fn state_digest(&self, state: &ZgbLattice) -> String {
        let [co, vac, o] = state.coverage();
        format!("co={co:.4};vac={vac:.4};o={o:.4}")
    }
}
