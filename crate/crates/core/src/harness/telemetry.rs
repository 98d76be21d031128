//! Telemetry CSV: a commented header (code version, seed, configuration echo)
//! followed by one row per robot per tick.

use std::io::Write;

use super::metrics::TelemetryRow;

pub const COLUMNS: [&str; 17] = [
    "tick", "t_s", "robot", "q1", "q2", "qd1", "qd2", "x", "y", "xd", "yd", "tau1", "tau2", "tau_ndob1",
    "tau_ndob2", "fff_x", "fff_y",
];

/// `%.9g`: nine significant digits, trailing zeros trimmed.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let s = format!("{:.8e}", v);
    // Rounding may have bumped the exponent; read it back from the text.
    let (mantissa, e) = s.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap_or(exp);
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let f = format!("{:.*}", decimals, v);
        trim_zeros(&f)
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Header lines: code version, seed, run label and the configuration, each
/// prefixed by `#`.
pub fn write_header<W: Write>(w: &mut W, label: &str, seed: u64, config_toml: &str) -> std::io::Result<()> {
    writeln!(w, "# telerehab-core {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# run = {label}")?;
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "# --- config ---")?;
    for line in config_toml.lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{}", COLUMNS.join(","))
}

pub fn write_row<W: Write>(w: &mut W, r: &TelemetryRow) -> std::io::Result<()> {
    let f = &r.frame;
    let nums = [
        r.t,
        f.q[0],
        f.q[1],
        f.qdot[0],
        f.qdot[1],
        f.x[0],
        f.x[1],
        f.x_d[0],
        f.x_d[1],
        f.tau[0],
        f.tau[1],
        f.tau_ndob[0],
        f.tau_ndob[1],
        r.f_ff[0],
        r.f_ff[1],
    ];
    write!(w, "{},{}", r.tick, fmt_sig9(nums[0]))?;
    write!(w, ",{}", r.robot)?;
    for v in &nums[1..] {
        write!(w, ",{}", fmt_sig9(*v))?;
    }
    writeln!(w)
}

pub fn write_csv<W: Write>(
    mut w: W,
    label: &str,
    seed: u64,
    config_toml: &str,
    rows: &[TelemetryRow],
) -> std::io::Result<()> {
    write_header(&mut w, label, seed, config_toml)?;
    for r in rows {
        write_row(&mut w, r)?;
    }
    w.flush()
}
