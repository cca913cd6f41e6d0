//! CSV writers. Every file is UTF-8, comma-separated, LF-terminated, with a
//! header row. Real numbers use six significant digits so that identical
//! runs produce byte-identical files.

use std::io::{self, Write};

use crate::engine::RunResult;
use crate::sweep::PhaseRow;
use crate::world::PhoneId;

pub const TIMESERIES_HEADER: &str = "tick,hour,protocol,seed,participation_alive,participation_connected,gini_alive,mean_battery,n_edges,n_components,msgs_delivered,msgs_pending,msgs_dropped";
pub const BETWEENNESS_HEADER: &str = "tick,phone_id,battery,betweenness";
pub const DELIVERIES_HEADER: &str = "message_id,src,dst,created_tick,delivered_tick,hops,status";
pub const EDGES_HEADER: &str = "phone_a,phone_b";
pub const PHASE_HEADER: &str = "n_phones,density,msgs_per_period,seed,longevity_mesh_h,longevity_sos_h,diff_h";

/// Six significant digits, `%g` style: trailing zeros trimmed, exponent
/// notation below `1e-4` and from `1e6` up.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_timeseries<W: Write>(mut out: W, runs: &[&RunResult]) -> io::Result<()> {
    writeln!(out, "{TIMESERIES_HEADER}")?;
    for r in runs {
        for s in &r.snapshots {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.tick,
                fmt_sig(s.hour),
                r.protocol,
                r.cfg.seed,
                fmt_sig(s.participation_alive),
                fmt_sig(s.participation_connected),
                fmt_sig(s.gini_alive),
                fmt_sig(s.mean_battery),
                s.n_edges,
                s.n_components,
                s.msgs_delivered,
                s.msgs_pending,
                s.msgs_dropped,
            )?;
        }
    }
    Ok(())
}

pub fn write_betweenness<W: Write>(mut out: W, run: &RunResult) -> io::Result<()> {
    writeln!(out, "{BETWEENNESS_HEADER}")?;
    for s in &run.snapshots {
        for &(id, battery, bc) in s.betweenness.iter().flatten() {
            writeln!(out, "{},{},{},{}", s.tick, id, fmt_sig(battery), fmt_sig(bc))?;
        }
    }
    Ok(())
}

/// One row per message; `delivered_tick` is empty unless delivered.
pub fn write_deliveries<W: Write>(mut out: W, run: &RunResult) -> io::Result<()> {
    writeln!(out, "{DELIVERIES_HEADER}")?;
    for m in run.report.records.iter().flatten() {
        let delivered = m.delivered_tick.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.id,
            m.src,
            m.dst,
            m.created_tick,
            delivered,
            m.hops,
            m.status.as_str()
        )?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(mut out: W, edges: &[(PhoneId, PhoneId)]) -> io::Result<()> {
    writeln!(out, "{EDGES_HEADER}")?;
    for (a, b) in edges {
        writeln!(out, "{a},{b}")?;
    }
    Ok(())
}

/// Seed-averaged rows carry `mean` in the seed column.
pub fn write_phase<W: Write>(mut out: W, rows: &[PhaseRow]) -> io::Result<()> {
    writeln!(out, "{PHASE_HEADER}")?;
    for r in rows {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n_phones,
            fmt_sig(r.density),
            r.msgs_per_period,
            seed,
            fmt_sig(r.longevity_mesh_h),
            fmt_sig(r.longevity_sos_h),
            fmt_sig(r.diff_h),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.16), "0.16");
        assert_eq!(fmt_sig(1.28), "1.28");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_sig(1234.56789), "1234.57");
        assert_eq!(fmt_sig(999999.5), "1e6");
        assert_eq!(fmt_sig(123456789.0), "1.23457e8");
        assert_eq!(fmt_sig(0.0000123456), "1.23456e-5");
        assert_eq!(fmt_sig(0.000123456), "0.000123456");
        assert_eq!(fmt_sig(-72.25), "-72.25");
        assert_eq!(fmt_sig(9.999995), "10");
    }

    #[test]
    fn phase_rows_render() {
        let rows = [PhaseRow {
            n_phones: 100,
            density: 0.16,
            msgs_per_period: 10,
            seed: None,
            longevity_mesh_h: 20.5,
            longevity_sos_h: 19.0,
            diff_h: -1.5,
        }];
        let mut buf = Vec::new();
        write_phase(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{PHASE_HEADER}\n100,0.16,10,mean,20.5,19,-1.5\n"));
    }
}
