//! CSV artifact formats. Floats are written with 17 significant digits
//! (`{:.16e}`), which parses back to the identical `f64`.

use std::fmt::Write as _;

use crate::dynamics::Interval;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rank::Steering;
use crate::reach::ReachLayers;
use crate::simulate::{BasinReport, ClosedLoopRun};
use crate::synth::{CellControl, FeedbackTable, TableMeta};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_f64(vals: &[f64]) -> String {
    vals.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

fn opt_layer(v: Option<u32>) -> String {
    v.map(|k| k.to_string()).unwrap_or_default()
}

fn numbered(prefix: &str, count: usize) -> String {
    (1..=count).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>().join(",")
}

/// `cell_index, x_1..x_n, i_x`; `i_x` empty for unreachable cells.
pub fn layers_csv(layers: &ReachLayers, grid: &Grid) -> Result<String> {
    let mut s = format!("cell_index,{},i_x\n", numbered("x", grid.dim()));
    for (c, m) in layers.membership.iter().enumerate() {
        let center = grid.center_of(c)?;
        let _ = writeln!(s, "{c},{},{}", join_f64(&center), opt_layer(*m));
    }
    Ok(s)
}

fn fmt_box(b: &[Interval]) -> String {
    b.iter()
        .map(|i| format!("{} {}", fmt_f64(i.lo), fmt_f64(i.hi)))
        .collect::<Vec<_>>()
        .join(";")
}

fn fmt_counts(c: &[usize]) -> String {
    c.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Feedback table with `#`-prefixed metadata lines, then
/// `cell_index, i_x, u_1..u_m`. Unreachable cells leave `i_x` and the
/// inputs empty.
pub fn table_csv(table: &FeedbackTable) -> String {
    let meta = &table.meta;
    let mut s = String::new();
    let _ = writeln!(s, "# model={}", meta.model);
    let _ = writeln!(s, "# n={}", meta.n);
    let _ = writeln!(s, "# m={}", meta.m);
    let _ = writeln!(s, "# state_box={}", fmt_box(&meta.state_box));
    let _ = writeln!(s, "# input_box={}", fmt_box(&meta.input_box));
    let _ = writeln!(s, "# cells={}", fmt_counts(&meta.cells_per_dim));
    let _ = writeln!(s, "# inputs={}", fmt_counts(&meta.input_points));
    let _ = writeln!(s, "# epsilon={}", fmt_f64(meta.epsilon));
    let _ = writeln!(s, "cell_index,i_x,{}", numbered("u", meta.m));
    for (c, ctl) in table.cells.iter().enumerate() {
        match ctl {
            CellControl::Unreachable => {
                let _ = writeln!(s, "{c},{}", ",".repeat(meta.m));
            }
            CellControl::Assigned { layer, input } => {
                let _ = writeln!(s, "{c},{layer},{}", join_f64(input));
            }
        }
    }
    s
}

pub fn parse_table_csv(text: &str, origin: &str) -> Result<FeedbackTable> {
    let bad = |line: usize, msg: String| Error::Artifact {
        path: origin.to_string(),
        message: format!("line {line}: {msg}"),
    };
    let mut fields: Vec<(String, String, usize)> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, l)) = lines.peek() {
        let Some(rest) = l.strip_prefix('#') else { break };
        let Some((k, v)) = rest.trim().split_once('=') else {
            return Err(bad(i + 1, "metadata line must be `# key=value`".into()));
        };
        fields.push((k.trim().to_string(), v.trim().to_string(), i + 1));
        lines.next();
    }
    let get = |key: &str| -> Result<(&str, usize)> {
        fields
            .iter()
            .find(|f| f.0 == key)
            .map(|f| (f.1.as_str(), f.2))
            .ok_or_else(|| bad(0, format!("missing metadata `{key}`")))
    };
    let num = |key: &str| -> Result<usize> {
        let (v, l) = get(key)?;
        v.parse().map_err(|_| bad(l, format!("`{key}` is not an integer")))
    };
    let counts = |key: &str| -> Result<Vec<usize>> {
        let (v, l) = get(key)?;
        v.split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(l, format!("`{key}` must be comma-separated integers")))
    };
    let bounds = |key: &str| -> Result<Vec<Interval>> {
        let (v, l) = get(key)?;
        v.split(';')
            .map(|pair| {
                let nums: Vec<f64> = pair.split_whitespace().filter_map(|p| p.parse().ok()).collect();
                match nums[..] {
                    [lo, hi] => Ok(Interval::new(lo, hi)),
                    _ => Err(bad(l, format!("`{key}` must be `lo hi;lo hi;…`"))),
                }
            })
            .collect()
    };
    let (eps, eps_line) = get("epsilon")?;
    let meta = TableMeta {
        model: get("model")?.0.to_string(),
        n: num("n")?,
        m: num("m")?,
        state_box: bounds("state_box")?,
        input_box: bounds("input_box")?,
        cells_per_dim: counts("cells")?,
        input_points: counts("inputs")?,
        epsilon: eps.parse().map_err(|_| bad(eps_line, "`epsilon` is not a number".into()))?,
    };
    let m = meta.m;
    let header = format!("cell_index,i_x,{}", numbered("u", m));
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((i, _)) => return Err(bad(i + 1, format!("expected header `{header}`"))),
        None => return Err(bad(0, "missing header".into())),
    }
    let total: usize = meta.cells_per_dim.iter().product();
    let mut cells = Vec::with_capacity(total);
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != m + 2 {
            return Err(bad(i + 1, format!("expected {} columns", m + 2)));
        }
        if cols[0].parse::<usize>().ok() != Some(cells.len()) {
            return Err(bad(i + 1, format!("expected cell_index {}", cells.len())));
        }
        if cols[1].is_empty() {
            if cols[2..].iter().any(|c| !c.is_empty()) {
                return Err(bad(i + 1, "unreachable cell carries an input".into()));
            }
            cells.push(CellControl::Unreachable);
        } else {
            let layer = cols[1].parse().map_err(|_| bad(i + 1, "bad i_x".into()))?;
            let input = cols[2..]
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(i + 1, "bad input value".into()))?;
            cells.push(CellControl::Assigned { layer, input });
        }
    }
    if cells.len() != total {
        return Err(bad(0, format!("{} rows for {total} cells", cells.len())));
    }
    Ok(FeedbackTable { meta, cells })
}

/// `t, x_1..x_n, u_1..u_m, i_x`; the final row has no input.
pub fn trajectory_csv(run: &ClosedLoopRun, m: usize) -> String {
    let traj = &run.trajectory;
    let n = traj.states[0].len();
    let mut s = format!("t,{},{},i_x\n", numbered("x", n), numbered("u", m));
    for (t, x) in traj.states.iter().enumerate() {
        let u = traj
            .inputs
            .get(t)
            .map(|u| join_f64(u))
            .unwrap_or_else(|| ",".repeat(m - 1));
        let _ = writeln!(s, "{t},{},{u},{}", join_f64(x), opt_layer(run.index_trace.get(t).copied().flatten()));
    }
    s
}

/// `cell_index, outcome, steps, i_x`.
pub fn basin_csv(report: &BasinReport) -> String {
    let mut s = String::from("cell_index,outcome,steps,i_x\n");
    for e in &report.entries {
        let _ = writeln!(s, "{},{},{},{}", e.cell, e.outcome.label(), e.outcome.step(), opt_layer(e.layer));
    }
    s
}

/// `step, u_1..u_m`.
pub fn steering_csv(steering: &Steering, m: usize) -> String {
    let mut s = format!("step,{}\n", numbered("u", m));
    for (k, u) in steering.inputs.chunks(m).enumerate() {
        let _ = writeln!(s, "{k},{}", join_f64(u));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::registry;
    use crate::grid::InputSet;
    use crate::par::Execution;
    use crate::reach::{compute_layers, ReachOptions};
    use crate::synth::synthesize;
    use proptest::prelude::*;

    fn table(name: &str, cells: usize, inputs: usize, eps: f64) -> (FeedbackTable, ReachLayers, Grid) {
        let m = registry::builtin(name).unwrap();
        let g = Grid::new(m.state_box().to_vec(), vec![cells; m.n()]).unwrap();
        let u = InputSet::uniform(m.input_box().to_vec(), vec![inputs; m.m()]).unwrap();
        let l = compute_layers(&m, &g, &u, eps, &ReachOptions::for_grid(&g)).unwrap();
        (synthesize(&l, &m, &g, &u, Execution::Sequential).unwrap(), l, g)
    }

    #[test]
    fn table_round_trips_exactly() {
        for (name, cells, inputs, eps) in [("double-integrator", 21, 21, 0.1), ("square-sum", 41, 21, 0.05)] {
            let (t, _, _) = table(name, cells, inputs, eps);
            let text = table_csv(&t);
            let back = parse_table_csv(&text, "mem").unwrap();
            assert_eq!(back, t);
            assert_eq!(table_csv(&back), text);
        }
    }

    #[test]
    fn table_format_details() {
        let (t, _, _) = table("square-sum", 41, 21, 0.05);
        let text = table_csv(&t);
        assert!(text.starts_with("# model=square-sum\n# n=1\n# m=1\n"));
        assert!(text.contains("# epsilon=5.0000000000000003e-2\n"));
        assert!(text.contains("\ncell_index,i_x,u_1\n0,,\n"));
    }

    #[test]
    fn malformed_tables_rejected() {
        let (t, _, _) = table("scalar-integrator", 41, 21, 0.05);
        let text = table_csv(&t);
        assert!(parse_table_csv(&text.replace("# n=1\n", ""), "x").is_err());
        assert!(parse_table_csv(&text.replace("cell_index,i_x,u_1", "a,b,c"), "x").is_err());
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(parse_table_csv(&truncated, "x").is_err());
        assert!(parse_table_csv(&text.replace("\n5,1,", "\n5,1,zz"), "x").is_err());
    }

    #[test]
    fn layers_csv_shape() {
        let (_, l, g) = table("square-sum", 41, 21, 0.05);
        let text = layers_csv(&l, &g).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("cell_index,x_1,i_x"));
        assert_eq!(lines.next(), Some("0,-1.9512195121951219e0,"));
        assert_eq!(text.lines().count(), 42);
    }

    proptest! {
        #[test]
        fn float_format_is_lossless(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = fmt_f64(v);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
