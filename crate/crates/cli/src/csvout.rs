//! Diagnostics CSV with a stable schema: one column per record field in the
//! declared order, values at 17 significant digits (round-trip safe).

use hymflow_core::diagnostics::DiagnosticsRecord;
use hymflow_core::Real;

pub fn header() -> String {
    DiagnosticsRecord::<Real>::FIELD_NAMES.join(",")
}

pub fn format_value(v: Real) -> String {
    format!("{v:.16e}")
}

pub fn render(records: &[DiagnosticsRecord<Real>]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(&header());
    out.push('\n');
    for r in records {
        let row: Vec<String> = r.values().iter().map(|&v| format_value(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip_through_text() {
        for v in [
            0.1,
            -3.0e-17,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            f64::MIN_POSITIVE,
        ] {
            let s = format_value(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v, back, "{s}");
        }
    }

    #[test]
    fn header_matches_declared_field_order() {
        assert_eq!(
            header(),
            "t,ym,dta_l2sq,sup_lambda_f,l2_lambda_f,i_func,he_resid,torsion_pair,energy_ident_resid,integrability_resid"
        );
    }
}
