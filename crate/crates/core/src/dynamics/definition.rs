//! System definition files.
//!
//! Two formats are accepted. JSON:
//!
//! ```json
//! { "name": "di", "n": 2, "m": 1,
//!   "f": ["x1 + x2 + 0.5*u1", "x2 + u1"],
//!   "state_box": [[-1, 1], [-1, 1]], "input_box": [[-2, 2]] }
//! ```
//!
//! and a line-oriented text form, one `key = value` per line, `#` comments:
//!
//! ```text
//! name = di
//! state_box = [-1, 1], [-1, 1]
//! input_box = [-2, 2]
//! f1 = x1 + x2 + 0.5*u1
//! f2 = x2 + u1
//! ```
//!
//! In the text form `n` is the number of `fK` lines; `m` comes from `m = …`,
//! then the length of `input_box`, then the largest `uK` referenced. Missing
//! boxes default to `[-1, 1]` in every dimension.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::{parse_expr, Expr};
use super::model::{Interval, SystemModel};
use super::registry;
use crate::error::{Error, ParseError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDef {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub f: Vec<String>,
    pub state_box: Vec<Interval>,
    pub input_box: Vec<Interval>,
}

impl SystemDef {
    pub fn build(&self) -> Result<SystemModel> {
        if self.f.len() != self.n {
            return Err(Error::InvalidModel(format!(
                "`f` has {} expressions but n = {}",
                self.f.len(),
                self.n
            )));
        }
        let exprs = self
            .f
            .iter()
            .enumerate()
            .map(|(i, src)| parse_expr(src, Some((self.n, self.m)), i + 1, 0))
            .collect::<Result<Vec<_>, _>>()?;
        SystemModel::from_exprs(
            self.name.clone(),
            self.m,
            exprs,
            self.state_box.clone(),
            self.input_box.clone(),
        )
    }
}

pub fn parse_system_json(text: &str) -> Result<SystemModel> {
    let def: SystemDef = serde_json::from_str(text).map_err(|e| ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    def.build()
}

/// Parses the line-oriented text form.
pub fn parse_system(text: &str) -> Result<SystemModel> {
    let mut name = None;
    let mut declared_n = None;
    let mut declared_m = None;
    let mut state_box = None;
    let mut input_box = None;
    let mut fs: Vec<(usize, usize, usize, &str)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(perr(line, first_col(raw), "expected `key = value`"));
        };
        let key = content[..eq].trim();
        let value = &content[eq + 1..];
        let value_col = eq + 1;
        match key {
            "name" => name = Some(value.trim().to_string()),
            "n" => declared_n = Some(parse_count(value, line, value_col)?),
            "m" => declared_m = Some(parse_count(value, line, value_col)?),
            "state_box" => state_box = Some(parse_box(value, line, value_col)?),
            "input_box" => input_box = Some(parse_box(value, line, value_col)?),
            k if k.starts_with('f') && k.len() > 1 && k[1..].bytes().all(|b| b.is_ascii_digit()) => {
                let idx: usize = k[1..].parse().unwrap();
                if idx == 0 {
                    return Err(perr(line, first_col(raw), "component indices start at f1"));
                }
                if fs.iter().any(|f| f.0 == idx) {
                    return Err(perr(line, first_col(raw), format!("duplicate definition of {k}")));
                }
                fs.push((idx, line, value_col, value));
            }
            other => {
                return Err(perr(line, first_col(raw), format!("unknown key `{other}`")));
            }
        }
    }

    fs.sort_by_key(|f| f.0);
    let n = fs.len();
    if n == 0 {
        return Err(perr(1, 1, "no `fK = …` lines"));
    }
    if let Some(missing) = (1..=n).find(|&k| fs[k - 1].0 != k) {
        return Err(Error::InvalidModel(format!("f{missing} is not defined")));
    }
    if let Some(dn) = declared_n {
        if dn != n {
            return Err(Error::InvalidModel(format!("n = {dn} but {n} components given")));
        }
    }
    let dims = declared_m
        .or(input_box.as_ref().map(Vec::len))
        .map(|m| (n, m));
    let exprs: Vec<Expr> = fs
        .iter()
        .map(|&(_, line, col, src)| parse_expr(src, dims, line, col))
        .collect::<Result<_, _>>()?;
    let m = match dims {
        Some((_, m)) => m,
        None => exprs.iter().map(|e| e.max_indices().1).max().unwrap_or(0).max(1),
    };
    let state_box = state_box.unwrap_or_else(|| vec![Interval::new(-1.0, 1.0); n]);
    let input_box = input_box.unwrap_or_else(|| vec![Interval::new(-1.0, 1.0); m]);
    SystemModel::from_exprs(
        name.unwrap_or_else(|| "system".into()),
        m,
        exprs,
        state_box,
        input_box,
    )
}

/// Resolves a `--system` argument: a registry name, or a path to a `.json`
/// or text definition.
pub fn load_system(source: &str) -> Result<SystemModel> {
    if let Some(model) = registry::builtin(source) {
        return Ok(model);
    }
    let path = Path::new(source);
    if !path.exists() && !source.contains(['/', '.']) {
        return Err(Error::UnknownSystem(source.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_system_json(&text)
    } else {
        parse_system(&text)
    }
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse(ParseError {
        line,
        column,
        message: message.into(),
    })
}

fn first_col(raw: &str) -> usize {
    raw.len() - raw.trim_start().len() + 1
}

fn parse_count(value: &str, line: usize, col: usize) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| perr(line, col + first_col(value), "expected a positive integer"))
}

/// `[lo, hi], [lo, hi], …`
fn parse_box(value: &str, line: usize, col: usize) -> Result<Vec<Interval>> {
    let err = |off: usize, msg: &str| perr(line, col + off + 1, msg);
    let mut out = Vec::new();
    let mut rest = value;
    let mut offset = 0;
    loop {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        rest = trimmed;
        if !rest.starts_with('[') {
            return Err(err(offset, "expected `[lo, hi]`"));
        }
        let Some(close) = rest.find(']') else {
            return Err(err(offset, "unterminated interval"));
        };
        let parts: Vec<&str> = rest[1..close].split(',').collect();
        let nums: Vec<f64> = parts.iter().filter_map(|p| p.trim().parse().ok()).collect();
        if parts.len() != 2 || nums.len() != 2 {
            return Err(err(offset, "interval must be `[lo, hi]` with two numbers"));
        }
        out.push(Interval::new(nums[0], nums[1]));
        offset += close + 1;
        rest = &rest[close + 1..];
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        rest = trimmed;
        if rest.is_empty() {
            return Ok(out);
        }
        if !rest.starts_with(',') {
            return Err(err(offset, "expected `,` between intervals"));
        }
        rest = &rest[1..];
        offset += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_integrator_text() {
        let m = parse_system("f1 = x1 + u1").unwrap();
        assert_eq!((m.n(), m.m()), (1, 1));
        assert_eq!(m.evaluate(&[0.25], &[-0.5]).unwrap(), vec![-0.25]);
    }

    #[test]
    fn square_sum_registers() {
        let m = parse_system("f1 = x1^2 + u1^2").unwrap();
        assert_eq!(m.evaluate(&[0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn equilibrium_violation() {
        assert!(matches!(
            parse_system("f1 = x1 + 1"),
            Err(Error::EquilibriumViolation { norm }) if norm == 1.0
        ));
    }

    #[test]
    fn full_text_definition() {
        let src = "# double integrator\nname = di\nstate_box = [-1, 1], [-1, 1]\ninput_box = [-2, 2]\nf2 = x2 + u1\nf1 = x1 + x2 + 0.5*u1\n";
        let m = parse_system(src).unwrap();
        assert_eq!(m.name(), "di");
        assert_eq!((m.n(), m.m()), (2, 1));
        assert_eq!(m.input_box(), &[Interval::new(-2.0, 2.0)]);
        assert_eq!(m.evaluate(&[1.0, 0.0], &[-1.0]).unwrap(), vec![0.5, -1.0]);
    }

    #[test]
    fn text_errors_have_positions() {
        let err = parse_system("f1 = x1 +\n").unwrap_err();
        let Error::Parse(p) = err else { panic!("{err}") };
        assert_eq!(p.line, 1);
        assert_eq!(p.column, 10);

        let err = parse_system("name = a\nf1 = x1 + u2\ninput_box = [-1, 1]").unwrap_err();
        let Error::Parse(p) = err else { panic!("{err}") };
        assert_eq!((p.line, p.column), (2, 11));

        let err = parse_system("f1 = x1\nbogus = 3").unwrap_err();
        assert!(matches!(err, Error::Parse(ParseError { line: 2, .. })));
        assert!(parse_system("f2 = x1").is_err());
        assert!(parse_system("f1 = x1\nstate_box = [-1 1]").is_err());
    }

    #[test]
    fn json_definition() {
        let src = r#"{"name":"di","n":2,"m":1,"f":["x1 + x2 + 0.5*u1","x2 + u1"],
                     "state_box":[[-1,1],[-1,1]],"input_box":[[-2,2]]}"#;
        let m = parse_system_json(src).unwrap();
        assert_eq!(m.evaluate(&[1.0, 0.0], &[0.0]).unwrap(), vec![1.0, 0.0]);

        let bad = r#"{"name":"s","n":1,"m":1,"f":["x1 + u2"],"state_box":[[-1,1]],"input_box":[[-1,1]]}"#;
        assert!(matches!(parse_system_json(bad), Err(Error::Parse(ParseError { line: 1, column: 6, .. }))));
        assert!(matches!(parse_system_json("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn load_resolves_registry_and_files() {
        assert_eq!(load_system("square-sum").unwrap().name(), "square-sum");
        assert!(matches!(load_system("no-such-system"), Err(Error::UnknownSystem(_))));
        assert!(matches!(load_system("/nonexistent/def.json"), Err(Error::Io { .. })));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("si.sys");
        std::fs::write(&path, "name = si\nf1 = x1 + u1\n").unwrap();
        assert_eq!(load_system(path.to_str().unwrap()).unwrap().name(), "si");
    }
}
