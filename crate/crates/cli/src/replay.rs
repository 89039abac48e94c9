//! Recompute the field-trial tables and diff them against the printed values.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use lorafix_core::geometry::{beta_from_alpha, distance_error_pct, slant_distance};
use lorafix_core::pathloss::{ci_overlap, fit_model, CalibrationPoint, PathLossModel, SampleStats};

use crate::reference_data::{self, FitRow};

/// Half a unit in the last printed place of each column.
pub const SD_TOLERANCE_M: f64 = 0.05;
pub const BETA_TOLERANCE_DEG: f64 = 0.05;
pub const STATS_TOLERANCE_DB: f64 = 0.01;
pub const EXPONENT_TOLERANCE: f64 = 0.005;
pub const INTERCEPT_TOLERANCE_DB: f64 = 0.10;
pub const R_SQUARED_TOLERANCE: f64 = 0.005;
pub const EST_SD_TOLERANCE_M: f64 = 1.0;
pub const ERROR_PCT_TOLERANCE: f64 = 1.0;

/// The model printed alongside the mean-RSSI table.
pub const FIELD_MODEL: PathLossModel = PathLossModel::new(1.165, -56.134);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Table2,
    Table3,
    Table5,
    Fig6,
}

impl Which {
    pub const ALL: [Which; 4] = [Self::Table2, Self::Table3, Self::Table5, Self::Fig6];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Table2 => "table2",
            Self::Table3 => "table3",
            Self::Table5 => "table5",
            Self::Fig6 => "fig6",
        }
    }
}

impl FromStr for Which {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| format!("unknown table {s:?}; expected table2, table3, table5 or fig6"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub computed: f64,
    pub printed: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(label: impl Into<String>, computed: f64, printed: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            computed,
            printed,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        (self.computed - self.printed).abs() <= self.tolerance + 1e-12
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} computed {:>12.4}  printed {:>10.4}  |Δ| {:.4} (tol {})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.label,
            self.computed,
            self.printed,
            (self.computed - self.printed).abs(),
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub which: Which,
    pub checks: Vec<Check>,
    /// Observations that are reported but not diffed.
    pub notes: Vec<String>,
    pub csv: String,
}

impl Replay {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

pub fn replay(which: Which) -> Replay {
    match which {
        Which::Table2 => table2(),
        Which::Table3 => table3(),
        Which::Table5 => table5(),
        Which::Fig6 => fig6(),
    }
}

fn table2() -> Replay {
    let mut checks = Vec::new();
    let mut csv = String::from("nominal_m,gd_m,h_m,alpha_deg,beta_deg,sd_m,printed_sd_m\n");
    for row in reference_data::table2() {
        let beta = beta_from_alpha(row.alpha_deg).expect("printed angles are in range");
        let sd = slant_distance(row.gd_m, row.h_m, row.beta_deg).expect("printed inputs are valid");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.4},{}",
            row.nominal_m, row.gd_m, row.h_m, row.alpha_deg, beta, sd, row.sd_m
        );
        checks.push(Check::new(
            format!("{} m beta", row.nominal_m),
            beta,
            row.beta_deg,
            BETA_TOLERANCE_DEG,
        ));
        checks.push(Check::new(
            format!("{} m slant distance", row.nominal_m),
            sd,
            row.sd_m,
            SD_TOLERANCE_M,
        ));
    }
    Replay {
        which: Which::Table2,
        checks,
        notes: Vec::new(),
        csv,
    }
}

/// Calibration points pairing each computed-from-table slant distance with its mean RSSI.
pub fn calibration_points() -> Vec<CalibrationPoint> {
    reference_data::table2()
        .iter()
        .zip(reference_data::table3())
        .map(|(s, r)| CalibrationPoint::new(s.sd_m, r.mean_db).expect("positive distance"))
        .collect()
}

fn fit_checks(checks: &mut Vec<Check>, printed: FitRow) -> (PathLossModel, f64) {
    let (model, report) = fit_model(&calibration_points()).expect("six distinct distances");
    checks.push(Check::new(
        "L",
        model.exponent,
        printed.exponent,
        EXPONENT_TOLERANCE,
    ));
    checks.push(Check::new(
        "C",
        model.intercept_db,
        printed.intercept_db,
        INTERCEPT_TOLERANCE_DB,
    ));
    checks.push(Check::new(
        "R²",
        report.r_squared,
        printed.r_squared,
        R_SQUARED_TOLERANCE,
    ));
    (model, report.r_squared)
}

/// `SampleStats` for each column, rebuilt from its (n, mean, std dev).
pub fn table3_stats() -> Vec<SampleStats> {
    reference_data::table3()
        .iter()
        .map(|r| SampleStats::from_summary(r.n, r.mean_db, r.std_dev).expect("n ≥ 2"))
        .collect()
}

fn table3() -> Replay {
    let rows = reference_data::table3();
    let stats = table3_stats();
    let mut checks = Vec::new();
    let mut csv = String::from("nominal_m,n,mean_db,std_dev,variance,std_err,ci_lo_db,ci_hi_db\n");
    for (row, s) in rows.iter().zip(&stats) {
        let tag = format!("{} m", row.nominal_m);
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            row.nominal_m,
            s.n,
            s.mean,
            s.std_dev,
            s.sample_variance,
            s.std_err,
            s.ci95_lo,
            s.ci95_hi
        );
        checks.push(Check::new(
            format!("{tag} std dev from variance"),
            row.variance.sqrt(),
            row.std_dev,
            STATS_TOLERANCE_DB,
        ));
        checks.push(Check::new(
            format!("{tag} std err"),
            s.std_err,
            row.std_err,
            STATS_TOLERANCE_DB,
        ));
        checks.push(Check::new(
            format!("{tag} CI low"),
            s.ci95_lo,
            row.ci_lo_db,
            STATS_TOLERANCE_DB,
        ));
        checks.push(Check::new(
            format!("{tag} CI high"),
            s.ci95_hi,
            row.ci_hi_db,
            STATS_TOLERANCE_DB,
        ));
    }
    let (model, r2) = fit_checks(&mut checks, reference_data::table3_fit());
    let _ = writeln!(
        csv,
        "# L={},C={},R2={}",
        model.exponent, model.intercept_db, r2
    );

    let notes = rows
        .windows(2)
        .zip(stats.windows(2))
        .map(|(r, s)| {
            format!(
                "{}/{} m intervals {}",
                r[0].nominal_m,
                r[1].nominal_m,
                if ci_overlap(&s[0], &s[1]) {
                    "overlap"
                } else {
                    "are disjoint"
                }
            )
        })
        .collect();
    Replay {
        which: Which::Table3,
        checks,
        notes,
        csv,
    }
}

fn table5() -> Replay {
    let mut checks = Vec::new();
    let mut csv =
        String::from("station_id,mean_rssi_db,est_sd_m,real_sd_m,error_pct,low_confidence\n");
    for row in reference_data::table5() {
        let est = FIELD_MODEL
            .estimate_distance(row.mean_rssi_db)
            .expect("nonzero exponent");
        let err = distance_error_pct(est.meters, row.real_sd_m).expect("positive reference");
        let _ = writeln!(
            csv,
            "{},{},{:.2},{},{:.2},{}",
            row.station_id, row.mean_rssi_db, est.meters, row.real_sd_m, err, est.low_confidence
        );
        checks.push(Check::new(
            format!("{} est. SD", row.station_id),
            est.meters,
            row.est_sd_m,
            EST_SD_TOLERANCE_M,
        ));
        checks.push(Check::new(
            format!("{} distance error %", row.station_id),
            err,
            row.error_pct,
            ERROR_PCT_TOLERANCE,
        ));
    }
    Replay {
        which: Which::Table5,
        checks,
        notes: Vec::new(),
        csv,
    }
}

fn fig6() -> Replay {
    let mut checks = Vec::new();
    let (model, _) = fit_checks(&mut checks, reference_data::table3_fit());
    let mut csv = String::from("kind,distance_m,log10_distance,rssi_db\n");
    for p in calibration_points() {
        let _ = writeln!(
            csv,
            "measured,{},{:.6},{}",
            p.slant_distance_m,
            p.slant_distance_m.log10(),
            p.mean_rssi_db
        );
    }
    // Fitted line sampled every 10 m across the calibrated span.
    for d in (10..=60).map(|k| f64::from(k) * 10.0) {
        let rssi = model.predict_rssi(d).expect("positive distance");
        let _ = writeln!(csv, "fitted,{d},{:.6},{rssi:.4}", d.log10());
    }
    Replay {
        which: Which::Fig6,
        checks,
        notes: Vec::new(),
        csv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table5_and_fig6_pass() {
        assert!(replay(Which::Table5).passed());
        assert!(replay(Which::Fig6).passed());
        assert!(replay(Which::Table3).passed());
    }

    #[test]
    fn table2_row_300m_is_out_of_tolerance() {
        let r = replay(Which::Table2);
        let failing: Vec<_> = r.failures().map(|c| c.label.as_str()).collect();
        assert_eq!(failing, ["300 m slant distance"]);
    }

    #[test]
    fn parse_names() {
        assert_eq!("fig6".parse::<Which>().unwrap(), Which::Fig6);
        assert!("table4".parse::<Which>().is_err());
    }
}
