use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{LabError, Result};

/// How the rescaling speed λ_s/λ is chosen between decompositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// λ_s/λ = −b_1 from the per-step decomposition.
    FullModulation,
    /// λ_s/λ chosen to keep w(1, s) fixed; b is fitted afterwards.
    PosthocFit,
}

impl FromStr for Gauge {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full_modulation" => Ok(Self::FullModulation),
            "posthoc_fit" => Ok(Self::PosthocFit),
            other => Err(format!("unknown gauge '{other}'")),
        }
    }
}

impl std::fmt::Display for Gauge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FullModulation => "full_modulation",
            Self::PosthocFit => "posthoc_fit",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub d: usize,
    pub ell: usize,
    pub l: usize,
    /// Radius parameter of Φ_M.
    pub m: f64,
    pub eta: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub n: usize,
    /// Initial time; b(s0) = b^e(s0), so b_1 ≈ c_1/s0.
    pub s0: f64,
    /// 𝓔_2 is integrated over y ≤ e2_radius.
    pub e2_radius: f64,
    /// Amplitude of the initial remainder q0 = a·y³e^{−y²} (zero by default).
    pub q0_amplitude: f64,
    pub rtol: f64,
    pub atol: f64,
    pub ds_init: f64,
    pub newton_tol: f64,
    /// Relative tolerance on energy increase across an accepted step.
    pub energy_tol: f64,
    pub gauge: Gauge,
    pub lambda_min: f64,
    pub s_max: f64,
    pub max_steps: usize,
    /// Wall-clock budget in seconds.
    pub wall_clock: f64,
    /// Profile snapshot every k accepted steps (0 disables).
    pub frame_every: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            d: 8,
            ell: 1,
            l: 2,
            m: 2.0,
            eta: 0.5,
            y_min: 1e-3,
            y_max: 1e5,
            n: 2048,
            s0: 1000.0,
            e2_radius: 100.0,
            q0_amplitude: 0.0,
            rtol: 1e-6,
            atol: 1e-9,
            ds_init: 1e-4,
            newton_tol: 1e-12,
            energy_tol: 1e-8,
            gauge: Gauge::FullModulation,
            lambda_min: 1e-6,
            s_max: 1e7,
            max_steps: 200_000,
            wall_clock: 600.0,
            frame_every: 0,
            seed: 0,
        }
    }
}

fn parse_field<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| LabError::Parse { line, msg: format!("{key}: {e}") })
}

impl SimConfig {
    /// Parses `key = value` lines; `#` starts a comment and unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| LabError::Parse { line, msg: format!("expected key=value, got '{content}'") })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "d" => c.d = parse_field(line, key, v)?,
                "ell" => c.ell = parse_field(line, key, v)?,
                "L" | "l" => c.l = parse_field(line, key, v)?,
                "M" | "m" => c.m = parse_field(line, key, v)?,
                "eta" => c.eta = parse_field(line, key, v)?,
                "y_min" => c.y_min = parse_field(line, key, v)?,
                "y_max" => c.y_max = parse_field(line, key, v)?,
                "n" => c.n = parse_field(line, key, v)?,
                "s0" => c.s0 = parse_field(line, key, v)?,
                "e2_radius" => c.e2_radius = parse_field(line, key, v)?,
                "q0_amplitude" => c.q0_amplitude = parse_field(line, key, v)?,
                "rtol" => c.rtol = parse_field(line, key, v)?,
                "atol" => c.atol = parse_field(line, key, v)?,
                "ds_init" => c.ds_init = parse_field(line, key, v)?,
                "newton_tol" => c.newton_tol = parse_field(line, key, v)?,
                "energy_tol" => c.energy_tol = parse_field(line, key, v)?,
                "gauge" => c.gauge = parse_field(line, key, v)?,
                "lambda_min" => c.lambda_min = parse_field(line, key, v)?,
                "s_max" => c.s_max = parse_field(line, key, v)?,
                "max_steps" => c.max_steps = parse_field(line, key, v)?,
                "wall_clock" => c.wall_clock = parse_field(line, key, v)?,
                "frame_every" => c.frame_every = parse_field(line, key, v)?,
                "seed" => c.seed = parse_field(line, key, v)?,
                _ => return Err(LabError::Parse { line, msg: format!("unknown key '{key}'") }),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Parameter(m));
        if self.ell == 0 || self.l < self.ell {
            return bad(format!("need 1 ≤ ℓ ≤ L, got ℓ = {}, L = {}", self.ell, self.l));
        }
        if !(self.m > 0.0 && 2.0 * self.m < self.y_max) {
            return bad(format!("M = {} must satisfy 0 < 2M < y_max", self.m));
        }
        if !(self.s0 > 0.0 && self.e2_radius > 0.0 && self.rtol > 0.0 && self.atol > 0.0 && self.ds_init > 0.0) {
            return bad("s0, e2_radius, rtol, atol and ds_init must be positive".into());
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < 1.0) {
            return bad(format!("lambda_min = {} outside (0, 1)", self.lambda_min));
        }
        Ok(())
    }

    /// Line-oriented text that [`SimConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = self;
        let _ = writeln!(s, "d = {}\nell = {}\nL = {}\nM = {}\neta = {}", c.d, c.ell, c.l, c.m, c.eta);
        let _ = writeln!(
            s,
            "y_min = {}\ny_max = {}\nn = {}\ns0 = {}\ne2_radius = {}",
            c.y_min, c.y_max, c.n, c.s0, c.e2_radius
        );
        let _ = writeln!(
            s,
            "q0_amplitude = {}\nrtol = {}\natol = {}\nds_init = {}",
            c.q0_amplitude, c.rtol, c.atol, c.ds_init
        );
        let _ = writeln!(s, "newton_tol = {}\nenergy_tol = {}\ngauge = {}", c.newton_tol, c.energy_tol, c.gauge);
        let _ = writeln!(s, "lambda_min = {}\ns_max = {}\nmax_steps = {}", c.lambda_min, c.s_max, c.max_steps);
        let _ = writeln!(s, "wall_clock = {}\nframe_every = {}\nseed = {}", c.wall_clock, c.frame_every, c.seed);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let c = SimConfig { n: 512, gauge: Gauge::PosthocFit, ..SimConfig::default() };
        let back = SimConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back.to_text(), c.to_text());
        match SimConfig::parse("d = 8\nn = many\n") {
            Err(LabError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(SimConfig::parse("bogus = 1").is_err());
        assert!(SimConfig::parse("ell = 3\nL = 2").is_err());
    }
}
