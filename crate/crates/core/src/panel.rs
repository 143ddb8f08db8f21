//! Panel data model, the per-round observation protocol and CSV panel I/O.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::feedback::FeedbackSchedule;
use crate::rng::{self, Domain};

/// Dense `(unit, time)` panel of features and outcomes.
///
/// Features are stored unit-major: the vector for `(i, t)` lives at
/// `features[(i * horizon + t) * feature_dim..][..feature_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    n_units: usize,
    horizon: usize,
    feature_dim: usize,
    features: Vec<f64>,
    outcomes: Vec<f64>,
    /// Optional per-time covariates shared by every unit (e.g. an observed factor path).
    context: Option<(usize, Vec<f64>)>,
    unit_tags: Option<Vec<String>>,
    unit_ids: Vec<String>,
    burn_in_end: usize,
}

impl Panel {
    pub fn new(
        n_units: usize,
        horizon: usize,
        feature_dim: usize,
        features: Vec<f64>,
        outcomes: Vec<f64>,
        burn_in_end: usize,
    ) -> Result<Self> {
        if n_units == 0 || horizon == 0 {
            return Err(Error::EmptyPanel("panel has no units or no times".into()));
        }
        if feature_dim == 0 {
            return Err(invalid("feature_dim must be positive"));
        }
        let cells = n_units * horizon;
        if features.len() != cells * feature_dim {
            return Err(Error::Dimension {
                expected: cells * feature_dim,
                got: features.len(),
            });
        }
        if outcomes.len() != cells {
            return Err(Error::Dimension {
                expected: cells,
                got: outcomes.len(),
            });
        }
        if burn_in_end >= horizon {
            return Err(invalid(format!(
                "burn_in_end {burn_in_end} must be < horizon {horizon}"
            )));
        }
        Ok(Self {
            n_units,
            horizon,
            feature_dim,
            features,
            outcomes,
            context: None,
            unit_tags: None,
            unit_ids: (0..n_units).map(|i| i.to_string()).collect(),
            burn_in_end,
        })
    }

    /// Attach a shared per-time context path (`horizon * dim` values, time-major).
    pub fn with_context(mut self, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * self.horizon {
            return Err(Error::Dimension {
                expected: dim * self.horizon,
                got: values.len(),
            });
        }
        self.context = Some((dim, values));
        Ok(self)
    }

    pub fn with_unit_tags(mut self, tags: Vec<String>) -> Result<Self> {
        if tags.len() != self.n_units {
            return Err(Error::Dimension {
                expected: self.n_units,
                got: tags.len(),
            });
        }
        self.unit_tags = Some(tags);
        Ok(self)
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_units {
            return Err(Error::Dimension {
                expected: self.n_units,
                got: ids.len(),
            });
        }
        self.unit_ids = ids;
        Ok(self)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn burn_in_end(&self) -> usize {
        self.burn_in_end
    }

    /// Number of rounds in the conformal period.
    pub fn conformal_len(&self) -> usize {
        self.horizon - self.burn_in_end
    }

    pub fn x(&self, unit: usize, t: usize) -> &[f64] {
        let start = (unit * self.horizon + t) * self.feature_dim;
        &self.features[start..start + self.feature_dim]
    }

    pub fn y(&self, unit: usize, t: usize) -> f64 {
        self.outcomes[unit * self.horizon + t]
    }

    pub fn context(&self, t: usize) -> Option<&[f64]> {
        self.context
            .as_ref()
            .map(|(dim, v)| &v[t * dim..(t + 1) * dim])
    }

    pub fn context_dim(&self) -> Option<usize> {
        self.context.as_ref().map(|(dim, _)| *dim)
    }

    pub fn unit_tags(&self) -> Option<&[String]> {
        self.unit_tags.as_deref()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }
}

/// Assignment of units to the calibration panel and the held-out targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSplit {
    pub calib_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

/// Uniform split without replacement. Calibration and test ids are returned sorted.
pub fn random_unit_split(
    panel: &Panel,
    n_calib: usize,
    n_test: usize,
    seed: u64,
) -> Result<UnitSplit> {
    if n_calib + n_test > panel.n_units() {
        return Err(invalid(format!(
            "split sizes {n_calib}+{n_test} exceed {} units",
            panel.n_units()
        )));
    }
    let mut ids: Vec<usize> = (0..panel.n_units()).collect();
    ids.shuffle(&mut rng::stream(seed, Domain::Split, 0, 0));
    let mut test_ids = ids[..n_test].to_vec();
    let mut calib_ids = ids[n_test..n_test + n_calib].to_vec();
    test_ids.sort_unstable();
    calib_ids.sort_unstable();
    Ok(UnitSplit {
        calib_ids,
        test_ids,
        seed,
    })
}

/// Stratified split: every unit tagged `fixed_tag` joins the calibration
/// panel; the remaining units are shuffled, `n_test` become targets and the
/// rest also join the calibration panel.
pub fn stratified_unit_split(
    panel: &Panel,
    fixed_tag: &str,
    n_test: usize,
    seed: u64,
) -> Result<UnitSplit> {
    let tags = panel
        .unit_tags()
        .ok_or_else(|| invalid("stratified split requires unit tags"))?;
    let mut calib_ids: Vec<usize> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        if tag == fixed_tag {
            calib_ids.push(i);
        } else {
            pool.push(i);
        }
    }
    if n_test > pool.len() {
        return Err(invalid(format!(
            "n_test {n_test} exceeds {} units outside tag {fixed_tag:?}",
            pool.len()
        )));
    }
    pool.shuffle(&mut rng::stream(seed, Domain::Split, 1, 0));
    let mut test_ids = pool[..n_test].to_vec();
    calib_ids.extend_from_slice(&pool[n_test..]);
    test_ids.sort_unstable();
    calib_ids.sort_unstable();
    Ok(UnitSplit {
        calib_ids,
        test_ids,
        seed,
    })
}

/// Everything a method may see at the start of one conformal round.
///
/// The current target outcome is deliberately absent: only the lagged label
/// released by the feedback schedule is carried.
#[derive(Debug, Clone)]
pub struct RoundBatch<'a> {
    /// Panel time index.
    pub t: usize,
    /// One-based round within the conformal period.
    pub round: usize,
    pub calib_pairs: Vec<(&'a [f64], f64)>,
    pub context: Option<&'a [f64]>,
    pub target_x: &'a [f64],
    pub lagged_reveal: bool,
    pub lagged_label: Option<f64>,
}

impl RoundBatch<'_> {
    pub fn n_calib(&self) -> usize {
        self.calib_pairs.len()
    }
}

/// Build the round-`t` batch for `target`. `t` is a panel time index inside
/// the conformal period; reveal lag is one round, and `R_0 = 0`.
pub fn stream_round<'a>(
    panel: &'a Panel,
    split: &UnitSplit,
    target: usize,
    feedback: &FeedbackSchedule,
    t: usize,
) -> Result<RoundBatch<'a>> {
    if t < panel.burn_in_end() || t >= panel.horizon() {
        return Err(invalid(format!(
            "time {t} outside conformal period [{}, {})",
            panel.burn_in_end(),
            panel.horizon()
        )));
    }
    if split.calib_ids.contains(&target) {
        return Err(invalid(format!("target {target} is a calibration unit")));
    }
    if !split.test_ids.contains(&target) {
        return Err(invalid(format!("target {target} is not a test unit")));
    }
    let round = t - panel.burn_in_end() + 1;
    let lagged_reveal = round > 1 && feedback.revealed(round - 1);
    Ok(RoundBatch {
        t,
        round,
        calib_pairs: split
            .calib_ids
            .iter()
            .map(|&i| (panel.x(i, t), panel.y(i, t)))
            .collect(),
        context: panel.context(t),
        target_x: panel.x(target, t),
        lagged_reveal,
        lagged_label: lagged_reveal.then(|| panel.y(target, t - 1)),
    })
}

/// Column layout of a panel CSV file.
#[derive(Debug, Clone)]
pub struct PanelCsvSchema {
    pub unit_col: String,
    pub time_col: String,
    pub y_col: String,
    pub feature_prefix: String,
    /// First conformal time index; `None` splits the horizon in half.
    pub burn_in_end: Option<usize>,
}

impl Default for PanelCsvSchema {
    fn default() -> Self {
        Self {
            unit_col: "unit_id".into(),
            time_col: "time_id".into(),
            y_col: "y".into(),
            feature_prefix: "x_".into(),
            burn_in_end: None,
        }
    }
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &PanelCsvSchema) -> Result<Panel> {
    let file = std::fs::File::open(path)?;
    read_panel_csv(file, schema)
}

/// Parse a dense panel from CSV. Units keep their order of first appearance;
/// times are sorted ascending.
pub fn read_panel_csv<R: Read>(reader: R, schema: &PanelCsvSchema) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 1,
                msg: format!("missing column {name:?}"),
            })
    };
    let unit_col = col(&schema.unit_col)?;
    let time_col = col(&schema.time_col)?;
    let y_col = col(&schema.y_col)?;
    let mut feature_cols = Vec::new();
    while let Some(pos) = headers
        .iter()
        .position(|h| h == format!("{}{}", schema.feature_prefix, feature_cols.len()))
    {
        feature_cols.push(pos);
    }
    if feature_cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            msg: format!("no feature columns {}0..", schema.feature_prefix),
        });
    }
    let d = feature_cols.len();

    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut unit_ids: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, i64, f64, Vec<f64>)> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is row 1
        let row = k + 2;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let unit = field(unit_col).to_string();
        let time: i64 = field(time_col).parse().map_err(|_| Error::Parse {
            row,
            msg: format!("time_id {:?} is not an integer", field(time_col)),
        })?;
        let parse_f = |c: usize| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Parse {
                row,
                msg: format!("column {:?}: {:?} is not a number", &headers[c], field(c)),
            })
        };
        let y = parse_f(y_col)?;
        let x = feature_cols.iter().map(|&c| parse_f(c)).collect::<Result<Vec<_>>>()?;
        let next = unit_ids.len();
        let u = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_ids.push(unit);
            next
        });
        rows.push((u, time, y, x));
    }
    if rows.is_empty() {
        return Err(Error::EmptyPanel("no data rows".into()));
    }
    let mut times: Vec<i64> = rows.iter().map(|r| r.1).collect();
    times.sort_unstable();
    times.dedup();
    let time_index: HashMap<i64, usize> = times.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let (n, horizon) = (unit_ids.len(), times.len());
    let mut filled = vec![false; n * horizon];
    let mut features = vec![0.0; n * horizon * d];
    let mut outcomes = vec![0.0; n * horizon];
    for (row, (u, time, y, x)) in rows.into_iter().enumerate() {
        let cell = u * horizon + time_index[&time];
        if filled[cell] {
            return Err(Error::Parse {
                row: row + 2,
                msg: format!("duplicate cell (unit {}, time {time})", unit_ids[u]),
            });
        }
        filled[cell] = true;
        outcomes[cell] = y;
        features[cell * d..(cell + 1) * d].copy_from_slice(&x);
    }
    if let Some(cell) = filled.iter().position(|f| !f) {
        return Err(Error::RaggedPanel {
            unit: unit_ids[cell / horizon].clone(),
            time: times[cell % horizon],
        });
    }
    let burn_in_end = schema.burn_in_end.unwrap_or(horizon / 2);
    Panel::new(n, horizon, d, features, outcomes, burn_in_end)?.with_unit_ids(unit_ids)
}

/// Write a panel in the CSV layout read by [`read_panel_csv`]. Floats use the
/// shortest representation that parses back to the same bits.
pub fn write_panel_csv<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["unit_id".to_string(), "time_id".into(), "y".into()];
    header.extend((0..panel.feature_dim()).map(|j| format!("x_{j}")));
    wtr.write_record(&header)?;
    for i in 0..panel.n_units() {
        for t in 0..panel.horizon() {
            let mut rec = vec![panel.unit_ids()[i].clone(), t.to_string(), panel.y(i, t).to_string()];
            rec.extend(panel.x(i, t).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_panel() -> Panel {
        // 4 units, 5 times, d = 2
        let features: Vec<f64> = (0..40).map(|v| v as f64 * 0.5).collect();
        let outcomes: Vec<f64> = (0..20).map(|v| v as f64).collect();
        Panel::new(4, 5, 2, features, outcomes, 2).unwrap()
    }

    #[test]
    fn cell_layout() {
        let p = small_panel();
        assert_eq!(p.x(1, 2), &[14.0 * 0.5, 15.0 * 0.5]);
        assert_eq!(p.y(3, 4), 19.0);
        assert_eq!(p.conformal_len(), 3);
    }

    #[test]
    fn rejects_bad_burn_in() {
        let err = Panel::new(1, 2, 1, vec![0.0; 2], vec![0.0; 2], 2).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let p = small_panel();
        let a = random_unit_split(&p, 2, 1, 9).unwrap();
        let b = random_unit_split(&p, 2, 1, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.calib_ids.len(), 2);
        assert_eq!(a.test_ids.len(), 1);
        assert!(a.test_ids.iter().all(|t| !a.calib_ids.contains(t)));
        assert!(random_unit_split(&p, 4, 1, 9).is_err());
        let empty = random_unit_split(&p, 3, 0, 9).unwrap();
        assert!(empty.test_ids.is_empty());
    }

    #[test]
    fn stratified_keeps_fixed_tag_in_calibration() {
        let tags = ["A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
        let p = small_panel().with_unit_tags(tags).unwrap();
        let s = stratified_unit_split(&p, "A", 1, 3).unwrap();
        assert!(s.calib_ids.contains(&0) && s.calib_ids.contains(&1));
        assert_eq!(s.calib_ids.len(), 3);
        assert_eq!(s.test_ids.len(), 1);
        assert!(s.test_ids[0] >= 2);
    }

    #[test]
    fn first_round_has_no_lagged_label() {
        let p = small_panel();
        let split = UnitSplit {
            calib_ids: vec![0, 1, 2],
            test_ids: vec![3],
            seed: 0,
        };
        let full = FeedbackSchedule::full(3);
        let b = stream_round(&p, &split, 3, &full, 2).unwrap();
        assert_eq!(b.round, 1);
        assert!(!b.lagged_reveal);
        assert!(b.lagged_label.is_none());
        assert_eq!(b.n_calib(), 3);

        let b = stream_round(&p, &split, 3, &full, 3).unwrap();
        assert!(b.lagged_reveal);
        assert_eq!(b.lagged_label, Some(p.y(3, 2)));

        let none = FeedbackSchedule::none(3);
        for t in 2..5 {
            assert!(stream_round(&p, &split, 3, &none, t).unwrap().lagged_label.is_none());
        }
    }

    #[test]
    fn stream_round_rejects_bad_requests() {
        let p = small_panel();
        let split = UnitSplit {
            calib_ids: vec![0, 1, 2],
            test_ids: vec![3],
            seed: 0,
        };
        let full = FeedbackSchedule::full(3);
        assert!(stream_round(&p, &split, 3, &full, 1).is_err());
        assert!(stream_round(&p, &split, 3, &full, 5).is_err());
        assert!(stream_round(&p, &split, 0, &full, 2).is_err());
    }

    #[test]
    fn csv_shape_passthrough() {
        let text = "unit_id,time_id,y,x_0\na,0,1.0,0.1\na,1,2.0,0.2\na,2,3.0,0.3\nb,0,4.0,0.4\nb,1,5.0,0.5\nb,2,6.0,0.6\n";
        let p = read_panel_csv(text.as_bytes(), &PanelCsvSchema::default()).unwrap();
        assert_eq!((p.n_units(), p.horizon(), p.feature_dim()), (2, 3, 1));
        assert_eq!(p.y(1, 0), 4.0);
        assert_eq!(p.x(0, 2), &[0.3]);
        assert_eq!(p.unit_ids(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn csv_times_are_sorted_units_by_first_appearance() {
        let text = "unit_id,time_id,y,x_0\nz,5,1,0\na,5,2,0\nz,3,3,0\na,3,4,0\n";
        let p = read_panel_csv(text.as_bytes(), &PanelCsvSchema::default()).unwrap();
        assert_eq!(p.unit_ids()[0], "z");
        assert_eq!(p.y(0, 0), 3.0);
        assert_eq!(p.y(1, 1), 2.0);
    }

    #[test]
    fn csv_ragged_names_cell() {
        let text = "unit_id,time_id,y,x_0\na,0,1,0\na,1,1,0\nb,0,1,0\n";
        match read_panel_csv(text.as_bytes(), &PanelCsvSchema::default()) {
            Err(Error::RaggedPanel { unit, time }) => {
                assert_eq!(unit, "b");
                assert_eq!(time, 1);
            }
            other => panic!("expected ragged error, got {other:?}"),
        }
    }

    #[test]
    fn csv_header_only_is_empty() {
        let text = "unit_id,time_id,y,x_0\n";
        assert!(matches!(
            read_panel_csv(text.as_bytes(), &PanelCsvSchema::default()),
            Err(Error::EmptyPanel(_))
        ));
    }

    #[test]
    fn csv_non_numeric_reports_row() {
        let text = "unit_id,time_id,y,x_0\na,0,1,0\na,1,oops,0\n";
        match read_panel_csv(text.as_bytes(), &PanelCsvSchema::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
