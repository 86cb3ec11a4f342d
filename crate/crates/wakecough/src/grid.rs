//! Hyperparameter grids written as phrases such as `2^k, k=9, … 12`,
//! `5 to 51 with step of 5` or `10^i where i=-7, ... 7`, plus the
//! canonical grid of every tunable quantity.

use crate::error::{invalid, Result};

/// Parses a grid phrase into its values, in order.
///
/// Accepted forms, combinable with a leading comma list:
/// `A to B with step of S` / `A to B in steps of S` (B included only when
/// reached), `[M ×] B^k, k=LIST`, `M × k, k=LIST`, `A and B`, and plain
/// comma lists. In `LIST`, an ellipsis fills the integers between its
/// neighbours.
pub fn parse_grid(phrase: &str) -> Result<Vec<f64>> {
    let s = normalize(phrase);
    let bad = || invalid(format!("cannot parse grid {phrase:?}"));
    if s.is_empty() {
        return Err(bad());
    }
    let out = if let Some((lhs, list)) = split_var(&s) {
        let ks = parse_list(&list).ok_or_else(bad)?;
        let f = parse_term(&lhs).ok_or_else(bad)?;
        ks.into_iter().map(f).collect()
    } else if let Some(i) = s.find(" to ") {
        let (head, rest) = s.split_at(i);
        let rest = &rest[4..];
        let (end, step) = rest
            .split_once(" with step of ")
            .or_else(|| rest.split_once(" in steps of "))
            .ok_or_else(bad)?;
        let items: Vec<&str> = head.split(',').map(str::trim).collect();
        let (start, lead) = items.split_last().ok_or_else(bad)?;
        let mut out = lead.iter().map(|v| num(v)).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
        let (a, b, st) = (num(start).ok_or_else(bad)?, num(end).ok_or_else(bad)?, num(step).ok_or_else(bad)?);
        if !(st > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / st + 1e-9).floor() as usize;
        out.extend((0..=n).map(|k| round12(a + k as f64 * st)));
        out
    } else {
        s.split([',', '&'])
            .flat_map(|p| p.split(" and "))
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(num)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?
    };
    if out.is_empty() || out.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(out)
}

fn normalize(s: &str) -> String {
    s.trim()
        .trim_matches('"')
        .replace(['\u{2212}', '\u{2013}'], "-")
        .replace(['\u{00d7}', '*'], " x ")
        .replace('\u{2026}', "...")
        .replace(" where ", ", ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits `lhs, k=LIST` on the variable binding.
fn split_var(s: &str) -> Option<(String, String)> {
    let eq = s.find('=')?;
    let before = &s[..eq];
    let comma = before.rfind(',')?;
    let var = before[comma + 1..].trim();
    if var.len() != 1 || !var.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let lhs = before[..comma].trim();
    if !lhs.contains(var) {
        return None;
    }
    Some((lhs.replace(var, "k"), s[eq + 1..].to_string()))
}

/// `M x B^k`, `B^k` or `M x k`.
fn parse_term(lhs: &str) -> Option<Box<dyn Fn(f64) -> f64>> {
    let (mult, body) = match lhs.split_once(" x ") {
        Some((m, b)) => (num(m)?, b.trim().to_string()),
        None => (1.0, lhs.trim().to_string()),
    };
    if body == "k" {
        return Some(Box::new(move |k| round12(mult * k)));
    }
    let (base, exp) = body.split_once('^')?;
    if exp.trim() != "k" {
        return None;
    }
    let base = num(base)?;
    Some(Box::new(move |k| round12(mult * base.powf(k))))
}

fn parse_list(list: &str) -> Option<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    let mut fill = false;
    for tok in list.split(',').map(str::trim) {
        let tok = match tok.strip_prefix("...") {
            Some(rest) => {
                fill = true;
                rest.trim()
            }
            None => tok,
        };
        if tok.is_empty() {
            continue;
        }
        let v = num(tok)?;
        if fill {
            let prev = *out.last()?;
            if prev.fract() != 0.0 || v.fract() != 0.0 || v <= prev {
                return None;
            }
            out.extend((prev as i64 + 1..v as i64).map(|k| k as f64));
            fill = false;
        }
        out.push(v);
    }
    (!fill && !out.is_empty()).then_some(out)
}

fn num(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        return Some(b.trim().parse::<f64>().ok()?.powf(e.trim().parse::<f64>().ok()?));
    }
    s.parse().ok()
}

/// Removes float noise from generated grid points.
fn round12(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let mag = 10f64.powi(11 - v.abs().log10().floor() as i32);
    (v * mag).round() / mag
}

/// Every tunable quantity that has a canonical grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    FrameLen,
    NumFrames,
    Subjects,
    Seconds,
    LrC,
    LrL1,
    LrL2,
    SvmC,
    SvmGamma,
    MlpHidden,
    MlpL2,
    CnnFilters,
    CnnKernel,
    CnnDropout,
    CnnDense,
    CnnBatch,
    CnnEpochs,
}

impl Param {
    pub const ALL: [Param; 17] = [
        Param::FrameLen,
        Param::NumFrames,
        Param::Subjects,
        Param::Seconds,
        Param::LrC,
        Param::LrL1,
        Param::LrL2,
        Param::SvmC,
        Param::SvmGamma,
        Param::MlpHidden,
        Param::MlpL2,
        Param::CnnFilters,
        Param::CnnKernel,
        Param::CnnDropout,
        Param::CnnDense,
        Param::CnnBatch,
        Param::CnnEpochs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::FrameLen => "frame-len",
            Param::NumFrames => "frames",
            Param::Subjects => "subjects",
            Param::Seconds => "seconds",
            Param::LrC => "lr-c",
            Param::LrL1 => "lr-l1",
            Param::LrL2 => "lr-l2",
            Param::SvmC => "svm-c",
            Param::SvmGamma => "svm-gamma",
            Param::MlpHidden => "mlp-hidden",
            Param::MlpL2 => "mlp-l2",
            Param::CnnFilters => "cnn-filters",
            Param::CnnKernel => "cnn-kernel",
            Param::CnnDropout => "cnn-dropout",
            Param::CnnDense => "cnn-dense",
            Param::CnnBatch => "cnn-batch",
            Param::CnnEpochs => "cnn-epochs",
        }
    }

    pub fn canonical_phrase(self) -> &'static str {
        match self {
            Param::FrameLen => "2^k, k=9, … 12",
            Param::NumFrames => "10 × k, k=7, 10, 12, 15",
            Param::Subjects => "5 to 51 with step of 5",
            Param::Seconds => "2, 5 to 100 with step of 5",
            Param::LrC | Param::SvmC | Param::SvmGamma => "10^i where i=−7, … 7",
            Param::LrL1 | Param::LrL2 | Param::MlpL2 => "0 to 1 in steps of 0.05",
            Param::MlpHidden => "70 to 150 in steps of 20",
            Param::CnnFilters => "3 × 2^k where k=3, 4, 5",
            Param::CnnKernel => "2 and 3",
            Param::CnnDropout => "0.1 to 0.5 in steps of 0.2",
            Param::CnnDense => "2^k where k=4, 5",
            Param::CnnBatch => "2^k where k=6, 7, 8",
            Param::CnnEpochs => "10 to 200 in steps of 20",
        }
    }

    /// Values the parameter may take without an override.
    pub fn canonical(self) -> Vec<f64> {
        let mut v = parse_grid(self.canonical_phrase()).expect("canonical phrases parse");
        if self == Param::Subjects {
            // the subject range ends at the full 51-subject corpus
            v.push(51.0);
        }
        v
    }

    pub fn integral(self) -> bool {
        !matches!(
            self,
            Param::Seconds
                | Param::LrC
                | Param::LrL1
                | Param::LrL2
                | Param::SvmC
                | Param::SvmGamma
                | Param::MlpL2
                | Param::CnnDropout
        )
    }
}

fn on_grid(v: f64, grid: &[f64]) -> bool {
    grid.iter().any(|&g| (v - g).abs() <= 1e-9 * g.abs().max(1.0))
}

/// Parses `phrase` for `param` and checks every value against the
/// canonical grid unless `allow_offgrid`.
pub fn resolve(param: Param, phrase: &str, allow_offgrid: bool) -> Result<Vec<f64>> {
    let values = parse_grid(phrase).map_err(|e| invalid(format!("--{}: {e}", param.name())))?;
    if param.integral() {
        if let Some(v) = values.iter().find(|v| !(v.fract() == 0.0 && **v >= 1.0)) {
            return Err(invalid(format!("--{}: {v} is not a positive integer", param.name())));
        }
    }
    if values.iter().any(|v| *v < 0.0) {
        return Err(invalid(format!("--{}: negative value", param.name())));
    }
    if !allow_offgrid {
        let grid = param.canonical();
        if let Some(v) = values.iter().find(|v| !on_grid(**v, &grid)) {
            return Err(invalid(format!(
                "--{}: {v} is outside the grid \"{}\" (pass --allow-offgrid to override)",
                param.name(),
                param.canonical_phrase()
            )));
        }
    }
    Ok(values)
}

pub fn resolve_usize(param: Param, phrase: &str, allow_offgrid: bool) -> Result<Vec<usize>> {
    Ok(resolve(param, phrase, allow_offgrid)?.into_iter().map(|v| v as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(a: i64, b: i64, s: i64) -> Vec<f64> {
        (a..=b).step_by(s as usize).map(|v| v as f64).collect()
    }

    #[test]
    fn verbatim_phrases() {
        assert_eq!(parse_grid("2^k, k=9, … 12").unwrap(), vec![512.0, 1024.0, 2048.0, 4096.0]);
        assert_eq!(parse_grid("10 × k, k=7, 10, 12, 15").unwrap(), vec![70.0, 100.0, 120.0, 150.0]);
        assert_eq!(parse_grid("5 to 51 with step of 5").unwrap(), range(5, 50, 5));
        let mut t = vec![2.0];
        t.extend(range(5, 100, 5));
        assert_eq!(parse_grid("2, 5 to 100 with step of 5").unwrap(), t);
        let c = parse_grid("10^i where i=−7, … 7").unwrap();
        assert_eq!(c.len(), 15);
        assert_eq!(c[0], 1e-7);
        assert_eq!(c[14], 1e7);
        assert_eq!(parse_grid("70 to 150 in steps of 20").unwrap(), range(70, 150, 20));
        assert_eq!(parse_grid("3 × 2^k where k=3, 4, 5").unwrap(), vec![24.0, 48.0, 96.0]);
        assert_eq!(parse_grid("10 to 200 in steps of 20").unwrap(), range(10, 190, 20));
        let l = parse_grid("0 to 1 in steps of 0.05").unwrap();
        assert_eq!(l.len(), 21);
        assert_eq!(l[3], 0.15);
        assert_eq!(l[20], 1.0);
        assert_eq!(parse_grid("0.1 to 0.5 in steps of 0.2").unwrap(), vec![0.1, 0.3, 0.5]);
        assert_eq!(parse_grid("2 and 3").unwrap(), vec![2.0, 3.0]);
        assert_eq!(parse_grid("2^k where k=6, 7, 8").unwrap(), vec![64.0, 128.0, 256.0]);
    }

    #[test]
    fn ascii_spellings() {
        assert_eq!(parse_grid("2^k, k=9,...,12").unwrap().len(), 4);
        assert_eq!(parse_grid("10^i where i=-7, ... 7").unwrap().len(), 15);
        assert_eq!(parse_grid("512, 1024").unwrap(), vec![512.0, 1024.0]);
        assert_eq!(parse_grid("1e-3").unwrap(), vec![1e-3]);
        for bad in ["", "abc", "5 to 1 with step of 1", "1 to 5 with step of 0", "2^k, k=5, …"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn conformance() {
        assert_eq!(resolve(Param::FrameLen, "2^k, k=9, … 12", false).unwrap().len(), 4);
        assert!(resolve(Param::FrameLen, "1000", false).is_err());
        assert_eq!(resolve(Param::FrameLen, "1000", true).unwrap(), vec![1000.0]);
        assert!(resolve(Param::Subjects, "51", false).is_ok());
        assert!(resolve(Param::Subjects, "14", false).is_err());
        assert!(resolve(Param::Seconds, "2.5", false).is_err());
        assert!(resolve(Param::MlpHidden, "80", false).is_err());
        assert!(resolve(Param::CnnEpochs, "200", false).is_err());
        assert!(resolve(Param::SvmGamma, "0.01", false).is_ok());
        assert!(resolve(Param::FrameLen, "0.5", true).is_err());
        for p in Param::ALL {
            let c = p.canonical();
            let phrase = c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ");
            assert_eq!(resolve(p, &phrase, false).unwrap(), c, "{}", p.name());
        }
    }
}
