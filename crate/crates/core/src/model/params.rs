use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the two-site plant.
///
/// Per-site quantities are stored as `[site 1, site 2]`. Units follow the
/// parameter file: seconds, MW, MJ/s, kPa, kJ/kg, J/Pa, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub tv: [f64; 2],
    pub tf: [f64; 2],
    pub tcd: [f64; 2],
    pub wo: [f64; 2],
    /// Rated mechanical power, MW.
    pub ke: [f64; 2],
    /// Rated heat output, MJ/s.
    pub kh: [f64; 2],
    pub beta: [f64; 2],
    pub omega_s: f64,
    pub inertia: [f64; 2],
    pub damping: [f64; 2],
    pub e_gen: [f64; 2],
    pub e_inf: f64,
    pub b10: f64,
    pub b20: f64,
    pub b12: f64,
    pub g10: f64,
    pub g20: f64,
    pub g12: f64,
    pub g11: f64,
    pub g22: f64,
    /// Nominal boiler pressure, kPa.
    pub p0: f64,
    pub rho_s: f64,
    pub h_s: f64,
    pub h_w: f64,
    /// Pressure-variation coefficient of each boiler, J/Pa.
    pub e_press: [f64; 2],
    pub d: f64,
    pub length: f64,
    pub lambda: f64,
    /// Heat loads, MJ/s.
    pub ql: [f64; 2],
    /// Rated heat flow used for scaling, MJ/s.
    pub qr: f64,
    /// Rated enthalpy used for scaling, kJ/kg.
    pub hr: f64,
    /// Rated density used for scaling, kg/m³.
    pub rhor: f64,
    /// Base power for per-unit mechanical power, MW.
    pub power_base: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let h_s = 2768.0;
        let h_w = 721.0;
        let rho_s = 4.161;
        Self {
            tv: [0.05; 2],
            tf: [0.4; 2],
            tcd: [0.1; 2],
            wo: [0.23; 2],
            ke: [7.5, 3.0],
            kh: [6.0; 2],
            beta: [0.0; 2],
            omega_s: 377.0,
            inertia: [10.0; 2],
            damping: [0.05; 2],
            e_gen: [1.0; 2],
            e_inf: 1.0,
            b10: 1.0,
            b20: 1.0,
            b12: 0.5,
            g10: 0.0,
            g20: 0.0,
            g12: 0.0,
            g11: 0.0,
            g22: 0.0,
            p0: 800.0,
            rho_s,
            h_s,
            h_w,
            e_press: [3073.0; 2],
            d: 0.2,
            length: 200.0,
            lambda: 0.016,
            ql: [2.0, 5.0],
            qr: 1.0,
            hr: h_s - h_w,
            rhor: rho_s,
            power_base: 5.0,
        }
    }
}

enum Slot {
    Pair(fn(&mut SystemParams) -> &mut [f64; 2], usize),
    Single(fn(&mut SystemParams) -> &mut f64),
}

fn slots() -> Vec<(&'static str, Slot)> {
    use Slot::*;
    vec![
        ("Tv_1", Pair(|p| &mut p.tv, 0)),
        ("Tv_2", Pair(|p| &mut p.tv, 1)),
        ("Tf_1", Pair(|p| &mut p.tf, 0)),
        ("Tf_2", Pair(|p| &mut p.tf, 1)),
        ("Tcd_1", Pair(|p| &mut p.tcd, 0)),
        ("Tcd_2", Pair(|p| &mut p.tcd, 1)),
        ("Wo_1", Pair(|p| &mut p.wo, 0)),
        ("Wo_2", Pair(|p| &mut p.wo, 1)),
        ("Ke_1", Pair(|p| &mut p.ke, 0)),
        ("Ke_2", Pair(|p| &mut p.ke, 1)),
        ("Kh_1", Pair(|p| &mut p.kh, 0)),
        ("Kh_2", Pair(|p| &mut p.kh, 1)),
        ("beta_1", Pair(|p| &mut p.beta, 0)),
        ("beta_2", Pair(|p| &mut p.beta, 1)),
        ("omega_s", Single(|p| &mut p.omega_s)),
        ("H_1", Pair(|p| &mut p.inertia, 0)),
        ("H_2", Pair(|p| &mut p.inertia, 1)),
        ("D_1", Pair(|p| &mut p.damping, 0)),
        ("D_2", Pair(|p| &mut p.damping, 1)),
        ("E_1", Pair(|p| &mut p.e_gen, 0)),
        ("E_2", Pair(|p| &mut p.e_gen, 1)),
        ("E_inf", Single(|p| &mut p.e_inf)),
        ("B_10", Single(|p| &mut p.b10)),
        ("B_20", Single(|p| &mut p.b20)),
        ("B_12", Single(|p| &mut p.b12)),
        ("G_10", Single(|p| &mut p.g10)),
        ("G_20", Single(|p| &mut p.g20)),
        ("G_12", Single(|p| &mut p.g12)),
        ("G_11", Single(|p| &mut p.g11)),
        ("G_22", Single(|p| &mut p.g22)),
        ("p0", Single(|p| &mut p.p0)),
        ("rho_s", Single(|p| &mut p.rho_s)),
        ("h_s", Single(|p| &mut p.h_s)),
        ("h_w", Single(|p| &mut p.h_w)),
        ("e_1", Pair(|p| &mut p.e_press, 0)),
        ("e_2", Pair(|p| &mut p.e_press, 1)),
        ("d", Single(|p| &mut p.d)),
        ("L", Single(|p| &mut p.length)),
        ("lambda", Single(|p| &mut p.lambda)),
        ("QL_1", Pair(|p| &mut p.ql, 0)),
        ("QL_2", Pair(|p| &mut p.ql, 1)),
        ("Qr", Single(|p| &mut p.qr)),
        ("hr", Single(|p| &mut p.hr)),
        ("rhor", Single(|p| &mut p.rhor)),
        ("power_base", Single(|p| &mut p.power_base)),
    ]
}

fn slot_mut<'a>(p: &'a mut SystemParams, slot: &Slot) -> &'a mut f64 {
    match slot {
        Slot::Pair(f, i) => &mut f(p)[*i],
        Slot::Single(f) => f(p),
    }
}

/// Keys that may be omitted; they default to values derived from others.
const OPTIONAL: [&str; 2] = ["hr", "rhor"];

impl SystemParams {
    /// Parses `key = value` lines. `#` starts a comment.
    ///
    /// Every key except `hr` and `rhor` is required; those two default to
    /// `h_s - h_w` and `rho_s`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let table = slots();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut p = SystemParams::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let (name, slot) = table
                .iter()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: format!("unknown key `{key}`"),
                })?;
            if let Some(prev) = seen.insert(name, line_no) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}` (first set on line {prev})"),
                });
            }
            let v: f64 = value.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("value `{value}` for `{key}` is not a number"),
            })?;
            *slot_mut(&mut p, slot) = v;
        }
        for (name, _) in &table {
            if !seen.contains_key(name) && !OPTIONAL.contains(name) {
                return Err(Error::Param {
                    key: (*name).to_string(),
                    msg: "missing".into(),
                });
            }
        }
        if !seen.contains_key("hr") {
            p.hr = p.h_s - p.h_w;
        }
        if !seen.contains_key("rhor") {
            p.rhor = p.rho_s;
        }
        p.validate()?;
        Ok(p)
    }

    /// Canonical `key = value` rendering, readable by [`Self::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut p = self.clone();
        let mut out = String::new();
        for (name, slot) in slots() {
            let v = *slot_mut(&mut p, &slot);
            let _ = writeln!(out, "{name} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Param {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        let mut p = self.clone();
        for (name, slot) in slots() {
            if !slot_mut(&mut p, &slot).is_finite() {
                return bad(name, "must be finite");
            }
        }
        let positive: [(&str, f64); 21] = [
            ("Tv_1", self.tv[0]),
            ("Tv_2", self.tv[1]),
            ("Tf_1", self.tf[0]),
            ("Tf_2", self.tf[1]),
            ("Tcd_1", self.tcd[0]),
            ("Tcd_2", self.tcd[1]),
            ("omega_s", self.omega_s),
            ("H_1", self.inertia[0]),
            ("H_2", self.inertia[1]),
            ("e_1", self.e_press[0]),
            ("e_2", self.e_press[1]),
            ("d", self.d),
            ("L", self.length),
            ("rho_s", self.rho_s),
            ("lambda", self.lambda),
            ("Qr", self.qr),
            ("hr", self.hr),
            ("rhor", self.rhor),
            ("power_base", self.power_base),
            ("Ke_1", self.ke[0]),
            ("Ke_2", self.ke[1]),
        ];
        for (key, v) in positive {
            if v <= 0.0 {
                return bad(key, "must be positive");
            }
        }
        for (i, key) in ["Wo_1", "Wo_2"].iter().enumerate() {
            if !(0.0..1.0).contains(&self.wo[i]) {
                return bad(key, "must lie in [0, 1)");
            }
        }
        for (i, key) in ["beta_1", "beta_2"].iter().enumerate() {
            if self.beta[i] <= -1.0 {
                return bad(key, "must be greater than -1");
            }
        }
        if self.h_s <= self.h_w {
            return bad("h_s", "must exceed h_w");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let p = SystemParams::default();
        let q = SystemParams::from_kv_str(&p.to_kv_string()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn optional_scales_default_to_derived_values() {
        let text: String = SystemParams::default()
            .to_kv_string()
            .lines()
            .filter(|l| !l.starts_with("hr ") && !l.starts_with("rhor "))
            .map(|l| format!("{l}\n"))
            .collect();
        let p = SystemParams::from_kv_str(&text).unwrap();
        assert_eq!(p.hr, 2047.0);
        assert_eq!(p.rhor, 4.161);
    }

    #[test]
    fn offending_key_is_named() {
        let text = SystemParams::default()
            .to_kv_string()
            .replace("Tf_2 = 0.4", "Tf_2 = -0.4");
        match SystemParams::from_kv_str(&text) {
            Err(Error::Param { key, .. }) => assert_eq!(key, "Tf_2"),
            other => panic!("unexpected {other:?}"),
        }
        let text = SystemParams::default()
            .to_kv_string()
            .replace("Wo_1 = 0.23", "Wo_1 = 1");
        assert!(matches!(
            SystemParams::from_kv_str(&text),
            Err(Error::Param { key, .. }) if key == "Wo_1"
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SystemParams::from_kv_str("Tv_1 = 0.05\nbogus = 1\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                msg: "unknown key `bogus`".into()
            }
        );
        let err = SystemParams::from_kv_str("Tv_1 = fast\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = SystemParams::from_kv_str("Tv_1 = 1\nTv_1 = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_key_is_reported() {
        let err = SystemParams::from_kv_str("Tv_1 = 0.05\n").unwrap_err();
        assert!(matches!(err, Error::Param { key, .. } if key == "Tv_2"));
    }
}
