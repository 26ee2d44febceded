//! The stacking transform: one classification block per distinct event time,
//! holding every member of that time's risk set, stacked vertically.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    /// One 0/1 column per distinct event time.
    Indicators,
    /// A single column holding the risk-set time.
    Continuous,
    /// `degree` columns holding powers of the risk-set time scaled by the
    /// largest event time.
    Polynomial { degree: usize },
}

/// How the risk-set time enters the stacked design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeEncoding {
    pub kind: EncodingKind,
    /// Covariate indices multiplied by the first time column, giving
    /// covariate-by-time interaction columns. Not available with indicators.
    pub interactions: Vec<usize>,
}

impl TimeEncoding {
    pub fn indicators() -> Self {
        Self { kind: EncodingKind::Indicators, interactions: Vec::new() }
    }

    pub fn continuous() -> Self {
        Self { kind: EncodingKind::Continuous, interactions: Vec::new() }
    }

    pub fn polynomial(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Argument("polynomial degree must be at least 1".into()));
        }
        Ok(Self { kind: EncodingKind::Polynomial { degree }, interactions: Vec::new() })
    }

    pub fn with_interactions(mut self, covariates: Vec<usize>) -> Self {
        self.interactions = covariates;
        self
    }

    /// True when the classifier needs its own intercept column.
    pub fn needs_intercept(&self) -> bool {
        self.kind != EncodingKind::Indicators
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self.kind {
            EncodingKind::Polynomial { degree: 0 } => {
                return Err(Error::Argument("polynomial degree must be at least 1".into()))
            }
            EncodingKind::Indicators if !self.interactions.is_empty() => {
                return Err(Error::Argument("time interactions need a continuous or polynomial encoding".into()))
            }
            _ => {}
        }
        if let Some(&j) = self.interactions.iter().find(|&&j| j >= p) {
            return Err(Error::Argument(format!("interaction covariate index {j} out of range (p = {p})")));
        }
        Ok(())
    }
}

impl fmt::Display for TimeEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EncodingKind::Indicators => write!(f, "indicators"),
            EncodingKind::Continuous => write!(f, "continuous"),
            EncodingKind::Polynomial { degree } => write!(f, "poly{degree}"),
        }
    }
}

impl FromStr for TimeEncoding {
    type Err = Error;

    /// Accepts `indicators`, `continuous` and `poly<d>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicators" => Ok(Self::indicators()),
            "continuous" => Ok(Self::continuous()),
            _ => match s.strip_prefix("poly").map(str::parse::<usize>) {
                Some(Ok(d)) => Self::polynomial(d),
                _ => Err(Error::Argument(format!("unknown time encoding `{s}`"))),
            },
        }
    }
}

/// Column layout of a stacked design: covariates, time columns, then
/// covariate-by-time interactions. Shared between stacking and prediction so
/// that rows are built identically in both.
#[derive(Debug, Clone, PartialEq)]
pub struct StackLayout<T> {
    pub encoding: TimeEncoding,
    pub covariate_names: Vec<String>,
    /// Distinct event times the design was built on.
    pub time_index: Vec<T>,
}

impl<T: Scalar> StackLayout<T> {
    pub fn new(encoding: TimeEncoding, covariate_names: Vec<String>, time_index: Vec<T>) -> Result<Self> {
        encoding.validate(covariate_names.len())?;
        Ok(Self { encoding, covariate_names, time_index })
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn time_width(&self) -> usize {
        match self.encoding.kind {
            EncodingKind::Indicators => self.time_index.len(),
            EncodingKind::Continuous => 1,
            EncodingKind::Polynomial { degree } => degree,
        }
    }

    pub fn width(&self) -> usize {
        self.p() + self.time_width() + self.encoding.interactions.len()
    }

    /// Range of the time columns inside a design row.
    pub fn time_columns(&self) -> std::ops::Range<usize> {
        self.p()..self.p() + self.time_width()
    }

    fn time_scale(&self) -> T {
        self.time_index.last().copied().unwrap_or_else(T::one)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.covariate_names.clone();
        let time_names: Vec<String> = match self.encoding.kind {
            EncodingKind::Indicators => (1..=self.time_index.len()).map(|k| format!("rs_{k}")).collect(),
            EncodingKind::Continuous => vec!["rs_time".into()],
            EncodingKind::Polynomial { degree } => (1..=degree).map(|j| format!("rs_time_pow{j}")).collect(),
        };
        let first = time_names.first().cloned().unwrap_or_default();
        names.extend(time_names);
        names.extend(self.encoding.interactions.iter().map(|&j| format!("{}:{first}", self.covariate_names[j])));
        names
    }

    /// Writes the design row for covariates `x` in the block at event-time
    /// index `k` into `out` (length [`width`](Self::width)).
    pub fn fill_row(&self, x: &[T], k: usize, out: &mut [T]) {
        let p = self.p();
        out[..p].copy_from_slice(x);
        let t = self.time_index[k];
        let time = &mut out[p..p + self.time_width()];
        match self.encoding.kind {
            EncodingKind::Indicators => {
                time.iter_mut().for_each(|v| *v = T::zero());
                time[k] = T::one();
            }
            EncodingKind::Continuous => time[0] = t,
            EncodingKind::Polynomial { .. } => {
                let s = t / self.time_scale();
                let mut acc = T::one();
                for v in time.iter_mut() {
                    acc *= s;
                    *v = acc;
                }
            }
        }
        let first_time = out[p];
        let base = p + self.time_width();
        for (slot, &j) in self.encoding.interactions.iter().enumerate() {
            out[base + slot] = x[j] * first_time;
        }
    }
}

/// The stacked classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDataset<T> {
    pub layout: StackLayout<T>,
    design: Vec<T>,
    outcome: Vec<bool>,
    row_block: Vec<usize>,
    row_subject: Vec<usize>,
    /// Subject ids in order of first appearance in the stack.
    subject_ids: Vec<String>,
}

impl<T: Scalar> StackedDataset<T> {
    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn row(&self, r: usize) -> &[T] {
        let w = self.width();
        &self.design[r * w..(r + 1) * w]
    }

    pub fn outcome(&self) -> &[bool] {
        &self.outcome
    }

    /// Event-time index of each row.
    pub fn row_blocks(&self) -> &[usize] {
        &self.row_block
    }

    pub fn row_subject_id(&self, r: usize) -> &str {
        &self.subject_ids[self.row_subject[r]]
    }

    pub fn time_index(&self) -> &[T] {
        &self.layout.time_index
    }

    pub fn n_events(&self) -> usize {
        self.outcome.iter().filter(|&&y| y).count()
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.export_to(std::io::BufWriter::new(file)).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    /// CSV with design columns, `outcome`, then `subject_id` and `event_time`.
    pub fn export_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let wrap = |e| Error::csv("<output>", e);
        let mut header = self.layout.column_names();
        header.extend(["outcome", "subject_id", "event_time"].map(String::from));
        w.write_record(&header).map_err(wrap)?;
        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(r).iter().map(T::to_string).collect();
            rec.push(if self.outcome[r] { "1" } else { "0" }.into());
            rec.push(self.row_subject_id(r).to_owned());
            rec.push(self.layout.time_index[self.row_block[r]].to_string());
            w.write_record(&rec).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::import_from(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    /// Reads a CSV produced by [`export_to`](Self::export_to).
    pub fn import_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> =
            rdr.headers().map_err(|e| Error::csv("<input>", e))?.iter().map(str::to_owned).collect();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_owned()))
        };
        let outcome_col = col("outcome")?;
        let subject_col = col("subject_id")?;
        let time_col = col("event_time")?;
        let design_names = &headers[..outcome_col];
        let first_time = design_names
            .iter()
            .position(|h| h.starts_with("rs_"))
            .ok_or_else(|| Error::MissingColumn("rs_*".into()))?;
        let covariate_names = design_names[..first_time].to_vec();
        let time_names: Vec<&String> =
            design_names[first_time..].iter().take_while(|h| h.starts_with("rs_")).collect();
        let interaction_names = &design_names[first_time + time_names.len()..];
        let kind = if time_names.len() == 1 && time_names[0] == "rs_time" {
            EncodingKind::Continuous
        } else if time_names[0].starts_with("rs_time_pow") {
            EncodingKind::Polynomial { degree: time_names.len() }
        } else {
            EncodingKind::Indicators
        };
        let interactions = interaction_names
            .iter()
            .map(|name| {
                let cov = name.split(':').next().unwrap_or("");
                covariate_names
                    .iter()
                    .position(|c| c == cov)
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;

        let width = design_names.len();
        let mut design = Vec::new();
        let mut outcome = Vec::new();
        let mut row_time = Vec::new();
        let mut row_ids = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::row(row, e.to_string()))?;
            for c in 0..width {
                let s = rec.get(c).unwrap_or("");
                design.push(s.parse::<T>().map_err(|_| Error::row(row, format!("`{s}` is not a number")))?);
            }
            outcome.push(match rec.get(outcome_col) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(Error::row(row, format!("outcome must be 0 or 1 (got {other:?})"))),
            });
            let t = rec.get(time_col).unwrap_or("");
            row_time.push(t.parse::<T>().map_err(|_| Error::row(row, format!("`{t}` is not a time")))?);
            row_ids.push(rec.get(subject_col).unwrap_or("").to_owned());
        }
        let mut time_index = row_time.clone();
        time_index.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        time_index.dedup();
        let row_block = row_time
            .iter()
            .map(|t| time_index.binary_search_by(|v| v.partial_cmp(t).expect("finite")).expect("time present"))
            .collect();
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let mut subject_ids = Vec::new();
        let row_subject = row_ids
            .into_iter()
            .map(|id| {
                *lookup.entry(id.clone()).or_insert_with(|| {
                    subject_ids.push(id);
                    subject_ids.len() - 1
                })
            })
            .collect();
        let layout = StackLayout::new(TimeEncoding { kind, interactions }, covariate_names, time_index)?;
        if layout.width() != width {
            return Err(Error::Validation(format!(
                "design has {width} columns but the encoding implies {}",
                layout.width()
            )));
        }
        Ok(Self { layout, design, outcome, row_block, row_subject, subject_ids })
    }
}

/// Builds the stacked dataset. Blocks are ordered by ascending event time and
/// rows within a block follow dataset order.
pub fn stack<T: Scalar>(ds: &SurvivalDataset<T>, encoding: &TimeEncoding) -> Result<StackedDataset<T>> {
    let risk_sets = ds.risk_sets();
    if risk_sets.is_empty() {
        return Err(Error::NoEvents);
    }
    let layout = StackLayout::new(
        encoding.clone(),
        ds.covariate_names().to_vec(),
        risk_sets.iter().map(|r| r.time).collect(),
    )?;
    let width = layout.width();
    let n_rows: usize = risk_sets.iter().map(|r| r.spans.len()).sum();
    let mut design = vec![T::zero(); n_rows * width];
    let mut outcome = Vec::with_capacity(n_rows);
    let mut row_block = Vec::with_capacity(n_rows);
    let mut row_subject = Vec::with_capacity(n_rows);
    let mut subject_slot: Vec<Option<usize>> = vec![None; ds.n_subjects()];
    let mut subject_ids = Vec::new();
    let mut r = 0;
    for (k, set) in risk_sets.iter().enumerate() {
        for &s in &set.spans {
            let span = ds.span(s);
            layout.fill_row(span.covariates, k, &mut design[r * width..(r + 1) * width]);
            outcome.push(span.event && span.stop == set.time);
            row_block.push(k);
            let slot = *subject_slot[span.subject].get_or_insert_with(|| {
                subject_ids.push(ds.subjects()[span.subject].id.clone());
                subject_ids.len() - 1
            });
            row_subject.push(slot);
            r += 1;
        }
    }
    Ok(StackedDataset { layout, design, outcome, row_block, row_subject, subject_ids })
}

/// Number of rows [`stack`] would produce.
pub fn stacked_row_count<T: Scalar>(ds: &SurvivalDataset<T>) -> usize {
    ds.stacked_row_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnMap, Format};

    fn read(s: &str, f: Format) -> SurvivalDataset<f64> {
        SurvivalDataset::read_csv_from(s.as_bytes(), f, &ColumnMap::default()).unwrap()
    }

    fn worked_example() -> SurvivalDataset<f64> {
        read("time,event,x1,x2\n1,1,11,12\n2,0,21,22\n3,1,31,32\n", Format::Single)
    }

    #[test]
    fn worked_example_indicators() {
        let sd = stack(&worked_example(), &TimeEncoding::indicators()).unwrap();
        assert_eq!(sd.n_rows(), 4);
        assert_eq!(sd.outcome(), &[true, false, false, true]);
        let rows: Vec<Vec<f64>> = (0..4).map(|r| sd.row(r).to_vec()).collect();
        assert_eq!(
            rows,
            vec![
                vec![11.0, 12.0, 1.0, 0.0],
                vec![21.0, 22.0, 1.0, 0.0],
                vec![31.0, 32.0, 1.0, 0.0],
                vec![31.0, 32.0, 0.0, 1.0],
            ]
        );
        assert_eq!(sd.layout.column_names(), vec!["x1", "x2", "rs_1", "rs_2"]);
    }

    #[test]
    fn single_subject_single_row() {
        let sd = stack(&read("time,event\n1,1\n", Format::Single), &TimeEncoding::indicators()).unwrap();
        assert_eq!(sd.n_rows(), 1);
        assert_eq!(sd.outcome(), &[true]);
    }

    #[test]
    fn no_events_is_rejected() {
        let ds = read("time,event\n1,0\n", Format::Single);
        assert!(matches!(stack(&ds, &TimeEncoding::indicators()), Err(Error::NoEvents)));
    }

    #[test]
    fn polynomial_degree_zero_rejected() {
        assert!(TimeEncoding::polynomial(0).is_err());
        assert!("poly0".parse::<TimeEncoding>().is_err());
        assert_eq!("poly3".parse::<TimeEncoding>().unwrap(), TimeEncoding::polynomial(3).unwrap());
    }

    #[test]
    fn polynomial_scales_by_last_event_time() {
        let sd = stack(&worked_example(), &TimeEncoding::polynomial(2).unwrap()).unwrap();
        assert_eq!(sd.row(0)[2..], [1.0 / 3.0, 1.0 / 9.0]);
        assert_eq!(sd.row(3)[2..], [1.0, 1.0]);
    }

    #[test]
    fn continuous_with_interaction() {
        let enc = TimeEncoding::continuous().with_interactions(vec![0]);
        let sd = stack(&worked_example(), &enc).unwrap();
        assert_eq!(sd.layout.column_names(), vec!["x1", "x2", "rs_time", "x1:rs_time"]);
        assert_eq!(sd.row(3), &[31.0, 32.0, 3.0, 93.0]);
        assert!(stack(&worked_example(), &TimeEncoding::indicators().with_interactions(vec![0])).is_err());
        assert!(stack(&worked_example(), &TimeEncoding::continuous().with_interactions(vec![5])).is_err());
    }

    #[test]
    fn time_varying_covariates_follow_intervals() {
        let ds = read(
            "id,start,stop,event,x\na,0,2,0,1\na,2,5,1,2\nb,0,1,1,9\nc,0,4,1,7\n",
            Format::Counting,
        );
        let sd = stack(&ds, &TimeEncoding::indicators()).unwrap();
        // blocks at t = 1, 4, 5
        let got: Vec<(String, f64, bool)> =
            (0..sd.n_rows()).map(|r| (sd.row_subject_id(r).to_owned(), sd.row(r)[0], sd.outcome()[r])).collect();
        let want = vec![
            ("a", 1.0, false),
            ("b", 9.0, true),
            ("c", 7.0, false),
            ("a", 2.0, false),
            ("c", 7.0, true),
            ("a", 2.0, true),
        ];
        let want: Vec<_> = want.into_iter().map(|(a, b, c)| (a.to_owned(), b, c)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_covariates_export() {
        let ds = read("time,event\n1,1\n2,1\n", Format::Single);
        let sd = stack(&ds, &TimeEncoding::indicators()).unwrap();
        let mut buf = Vec::new();
        sd.export_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "rs_1,rs_2,outcome,subject_id,event_time\n1,0,1,1,1\n1,0,0,2,1\n0,1,1,2,2\n");
    }

    #[test]
    fn export_import_roundtrip() {
        for enc in ["indicators", "continuous", "poly3"] {
            let mut enc: TimeEncoding = enc.parse().unwrap();
            if enc.kind != EncodingKind::Indicators {
                enc = enc.with_interactions(vec![1]);
            }
            let ds = read("entry,time,event,x1,x2\n0,1.5,1,0.1,-2\n0.5,2,0,0.3,4\n1,3.25,1,0.5,1e-3\n", Format::Single);
            let sd = stack(&ds, &enc).unwrap();
            let mut buf = Vec::new();
            sd.export_to(&mut buf).unwrap();
            let back = StackedDataset::<f64>::import_from(buf.as_slice()).unwrap();
            assert_eq!(sd, back, "{enc}");
        }
    }
}
