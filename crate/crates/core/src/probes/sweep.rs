use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::TargetSpec;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::template::{Bindings, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: i64,
    pub p: f64,
}

/// Target probability as a function of an integer prompt variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SweepPoint>", into = "Vec<SweepPoint>")]
pub struct SweepSeries {
    points: Vec<SweepPoint>,
}

impl TryFrom<Vec<SweepPoint>> for SweepSeries {
    type Error = Error;

    fn try_from(points: Vec<SweepPoint>) -> Result<Self> {
        SweepSeries::new(points.into_iter().map(|pt| (pt.x, pt.p)))
    }
}

impl From<SweepSeries> for Vec<SweepPoint> {
    fn from(s: SweepSeries) -> Self {
        s.points
    }
}

impl SweepSeries {
    /// `x` must be strictly increasing and every `p` in `[0, 1]`.
    pub fn new(points: impl IntoIterator<Item = (i64, f64)>) -> Result<Self> {
        let points: Vec<SweepPoint> = points.into_iter().map(|(x, p)| SweepPoint { x, p }).collect();
        for w in points.windows(2) {
            if w[1].x <= w[0].x {
                return Err(Error::InvalidSeries(format!(
                    "x must be strictly increasing ({} then {})",
                    w[0].x, w[1].x
                )));
            }
        }
        if let Some(bad) = points.iter().find(|pt| !(0.0..=1.0).contains(&pt.p)) {
            return Err(Error::InvalidSeries(format!("p={} at x={} outside [0, 1]", bad.p, bad.x)));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[SweepPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub template: PromptTemplate,
    pub variable: String,
    pub start: i64,
    pub end: i64,
    pub step: i64,
    pub target: TargetSpec,
    /// Values for any other variables in the template.
    pub bindings: Bindings,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::InvalidSweep(format!("start {} > end {}", self.start, self.end)));
        }
        if self.step < 1 {
            return Err(Error::InvalidSweep("step must be at least 1".into()));
        }
        if self.start < 0 || self.end > 100 {
            return Err(Error::InvalidSweep("range must lie within 0..=100".into()));
        }
        if !self.template.variables().contains(self.variable.as_str()) {
            return Err(Error::InvalidSweep(format!(
                "template has no variable `{}`",
                self.variable
            )));
        }
        Ok(())
    }

    pub fn xs(&self) -> impl Iterator<Item = i64> {
        (self.start..=self.end).step_by(self.step as usize)
    }
}

/// Parses `start:end` or `start:end:step`.
pub fn parse_range(text: &str) -> Result<(i64, i64, i64)> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<i64>()
            .map_err(|_| Error::InvalidSweep(format!("bad range `{text}`")))
    };
    match parts.as_slice() {
        [a, b] => Ok((num(a)?, num(b)?, 1)),
        [a, b, c] => Ok((num(a)?, num(b)?, num(c)?)),
        _ => Err(Error::InvalidSweep(format!("bad range `{text}`, expected start:end[:step]"))),
    }
}

/// One oracle call per `x`, with the variable bound to its decimal form.
///
/// On failure the error carries the completed prefix of the series and the
/// `x` to resume from; completed points are already in the oracle cache.
pub fn run_sweep(spec: &SweepSpec, oracle: &Oracle) -> Result<SweepSeries> {
    spec.validate()?;
    let xs: Vec<i64> = spec.xs().collect();
    let results: Vec<Result<f64>> = xs
        .par_iter()
        .map(|&x| {
            let mut bindings = spec.bindings.clone();
            bindings.insert(spec.variable.clone(), x.to_string());
            let prompt = spec.template.render_full(&bindings)?;
            Ok(oracle.token_probability(&prompt, &spec.target)?.probability)
        })
        .collect();

    let mut points = Vec::with_capacity(xs.len());
    for (x, result) in xs.iter().zip(results) {
        match result {
            Ok(p) => points.push((*x, p)),
            Err(source) => {
                return Err(Error::SweepInterrupted {
                    partial: SweepSeries::new(points)?,
                    resume_at: *x,
                    source: Box::new(source),
                })
            }
        }
    }
    SweepSeries::new(points)
}

pub const DEFAULT_BARRIER_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BARRIER_WINDOW: usize = 3;

/// First `x` where the probability drops below `threshold` and stays below
/// for `window` consecutive samples.
pub fn detect_barrier(series: &SweepSeries, threshold: f64, window: usize) -> Result<Option<i64>> {
    if series.is_empty() {
        return Err(Error::InvalidSeries("series is empty".into()));
    }
    if window == 0 {
        return Err(Error::InvalidSeries("window must be at least 1".into()));
    }
    let points = series.points();
    if window > points.len() {
        return Err(Error::WindowExceedsSeries {
            window,
            len: points.len(),
        });
    }
    Ok(points
        .windows(window)
        .find(|run| run.iter().all(|pt| pt.p < threshold))
        .map(|run| run[0].x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn series_invariants() {
        assert!(SweepSeries::new([(0, 0.5), (0, 0.4)]).is_err());
        assert!(SweepSeries::new([(1, 0.5), (0, 0.4)]).is_err());
        assert!(SweepSeries::new([(0, 1.2)]).is_err());
        assert!(SweepSeries::new([(0, 0.5), (5, 0.4)]).is_ok());
    }

    #[test]
    fn barrier_rules() {
        let constant = SweepSeries::new((0..10).map(|x| (x, 0.9))).unwrap();
        assert_eq!(detect_barrier(&constant, 0.5, 3).unwrap(), None);
        let dip = SweepSeries::new([(0, 0.9), (1, 0.4), (2, 0.6), (3, 0.3), (4, 0.2), (5, 0.1)]).unwrap();
        assert_eq!(detect_barrier(&dip, 0.5, 3).unwrap(), Some(3));
        assert_eq!(detect_barrier(&dip, 0.5, 1).unwrap(), Some(1));
        assert!(matches!(
            detect_barrier(&dip, 0.5, 7),
            Err(Error::WindowExceedsSeries { window: 7, len: 6 })
        ));
        let empty = SweepSeries::new(Vec::<(i64, f64)>::new()).unwrap();
        assert!(detect_barrier(&empty, 0.5, 1).is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:50").unwrap(), (0, 50, 1));
        assert_eq!(parse_range("0:100:5").unwrap(), (0, 100, 5));
        assert!(parse_range("0").is_err());
        assert!(parse_range("a:b").is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_delays_barrier(
            ps in prop::collection::vec(0.0f64..=1.0, 1..40),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
            window in 1usize..5,
        ) {
            prop_assume!(window <= ps.len());
            let s = SweepSeries::new(ps.iter().enumerate().map(|(i, &p)| (i as i64, p))).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let at_lo = detect_barrier(&s, lo, window).unwrap();
            let at_hi = detect_barrier(&s, hi, window).unwrap();
            match (at_lo, at_hi) {
                (Some(a), Some(b)) => prop_assert!(b <= a),
                (Some(_), None) => prop_assert!(false, "higher threshold lost the barrier"),
                _ => {}
            }
        }
    }
}
