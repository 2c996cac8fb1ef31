//! Dataset representation, CSV ingestion, and synthetic data generators.
//!
//! A [`Dataset`] is immutable after construction: the feature matrix is
//! fully numeric (categorical CSV columns are one-hot encoded with the
//! first level dropped so downstream designs stay full rank), missing
//! values are a hard ingestion error, and classification responses are
//! coded `{0,1}`. Row `i` everywhere downstream refers to source row `i`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CvError, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Regression(Vec<f64>),
    Classification(Vec<u8>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Regression(v) => v.len(),
            Response::Classification(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Response::Regression(_) => Task::Regression,
            Response::Classification(_) => Task::Classification,
        }
    }

    /// Response value as f64 (class labels become 0.0/1.0).
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Response::Regression(v) => v[i],
            Response::Classification(v) => v[i] as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Mat,
    response: Response,
    pub groups: Option<Vec<String>>,
    pub strata: Option<Vec<String>>,
    pub coords: Option<Mat>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Mat,
        response: Response,
        groups: Option<Vec<String>>,
        strata: Option<Vec<String>>,
        coords: Option<Mat>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(CvError::invalid("dataset has no rows"));
        }
        if response.len() != n {
            return Err(CvError::invalid(format!(
                "response length {} != n = {n}",
                response.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(CvError::invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(CvError::invalid("groups length != n"));
            }
        }
        if let Some(s) = &strata {
            if s.len() != n {
                return Err(CvError::invalid("strata length != n"));
            }
        }
        if let Some(c) = &coords {
            if c.nrows() != n {
                return Err(CvError::invalid("coords row count != n"));
            }
            if !c.is_finite() {
                return Err(CvError::invalid("coords contain non-finite values"));
            }
        }
        if !features.is_finite() {
            return Err(CvError::invalid("features contain non-finite values"));
        }
        if let Response::Regression(v) = &response {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CvError::invalid("response contains non-finite values"));
            }
        }
        if let Response::Classification(v) = &response {
            if v.iter().any(|&x| x > 1) {
                return Err(CvError::invalid("classification labels must be 0 or 1"));
            }
        }
        Ok(Dataset { features, response, groups, strata, coords, feature_names })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn task(&self) -> Task {
        self.response.task()
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    /// Response as f64, class labels coded 0.0/1.0.
    pub fn y(&self, i: usize) -> f64 {
        self.response.value(i)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        match &self.response {
            Response::Classification(v) => Some(v),
            Response::Regression(_) => None,
        }
    }

    /// Distinct group labels in order of first occurrence.
    pub fn group_levels(&self) -> Vec<String> {
        let mut seen = Vec::new();
        if let Some(groups) = &self.groups {
            for g in groups {
                if !seen.contains(g) {
                    seen.push(g.clone());
                }
            }
        }
        seen
    }

    /// Serialize to the toolkit CSV dialect (header row, '.' decimals).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = vec!["y".to_string()];
        header.extend(self.feature_names.iter().cloned());
        if self.groups.is_some() {
            header.push("group".into());
        }
        if self.strata.is_some() {
            header.push("stratum".into());
        }
        if let Some(c) = &self.coords {
            for d in 0..c.ncols() {
                header.push(format!("coord{}", d + 1));
            }
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n() {
            let mut cells: Vec<String> = Vec::with_capacity(header.len());
            match &self.response {
                Response::Regression(v) => cells.push(format!("{}", v[i])),
                Response::Classification(v) => cells.push(format!("{}", v[i])),
            }
            for j in 0..self.p() {
                cells.push(format!("{}", self.features.get(i, j)));
            }
            if let Some(g) = &self.groups {
                cells.push(g[i].clone());
            }
            if let Some(s) = &self.strata {
                cells.push(s[i].clone());
            }
            if let Some(c) = &self.coords {
                for d in 0..c.ncols() {
                    cells.push(format!("{}", c.get(i, d)));
                }
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Schema that reloads the output of [`Dataset::to_csv`] exactly.
    pub fn derived_schema(&self) -> CsvSchema {
        CsvSchema {
            response_column: "y".into(),
            feature_columns: self.feature_names.clone(),
            group_column: self.groups.as_ref().map(|_| "group".to_string()),
            strata_column: self.strata.as_ref().map(|_| "stratum".to_string()),
            coord_columns: self
                .coords
                .as_ref()
                .map(|c| (0..c.ncols()).map(|d| format!("coord{}", d + 1)).collect()),
            task: self.task(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response_column: String,
    pub feature_columns: Vec<String>,
    #[serde(default)]
    pub group_column: Option<String>,
    #[serde(default)]
    pub strata_column: Option<String>,
    #[serde(default)]
    pub coord_columns: Option<Vec<String>>,
    pub task: Task,
}

impl CsvSchema {
    fn validate(&self) -> Result<()> {
        let mut names: Vec<&String> = vec![&self.response_column];
        names.extend(self.feature_columns.iter());
        if let Some(g) = &self.group_column {
            names.push(g);
        }
        if let Some(s) = &self.strata_column {
            names.push(s);
        }
        if let Some(cs) = &self.coord_columns {
            names.extend(cs.iter());
        }
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                if a == b {
                    return Err(CvError::Csv(format!("schema column `{a}` used twice")));
                }
            }
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| CvError::Csv("empty file: header row required".into()))?;
        let header: Vec<String> =
            header_line.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != header.len() {
                return Err(CvError::Csv(format!(
                    "row {} has {} cells, expected {}",
                    lineno + 1,
                    cells.len(),
                    header.len()
                )));
            }
            rows.push(cells);
        }
        if rows.is_empty() {
            return Err(CvError::Csv("no data rows".into()));
        }
        Ok(RawTable { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CvError::Csv(format!("missing column `{name}`")))
    }

    /// Raw strings of one column, rejecting missing cells.
    fn strings(&self, col: usize) -> Result<Vec<String>> {
        let name = &self.header[col];
        let mut out = Vec::with_capacity(self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            let cell = &row[col];
            if is_missing(cell) {
                return Err(CvError::Csv(format!(
                    "missing value at row {}, column {name}",
                    r + 1
                )));
            }
            out.push(cell.clone());
        }
        Ok(out)
    }

    fn numeric(&self, col: usize) -> Result<Vec<f64>> {
        let name = &self.header[col];
        let mut out = Vec::with_capacity(self.rows.len());
        for (r, cell) in self.strings(col)?.into_iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CvError::Csv(format!(
                    "non-numeric cell `{cell}` at row {}, column {name}",
                    r + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CvError::Csv(format!(
                    "missing value at row {}, column {name}",
                    r + 1
                )));
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Load a CSV file against a schema.
///
/// Feature columns whose cells all parse as numbers stay numeric; any
/// other feature column is treated as categorical and one-hot encoded
/// with the lexicographically first level dropped. A classification
/// response must contain exactly two distinct values, recoded to `{0,1}`
/// in lexicographic order.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CvError::Csv(format!("cannot read {}: {e}", path.as_ref().display())))?;
    load_csv_str(&text, schema)
}

pub fn load_csv_str(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let table = RawTable::parse(text)?;
    let n = table.rows.len();

    let resp_col = table.column(&schema.response_column)?;
    let response = match schema.task {
        Task::Regression => Response::Regression(table.numeric(resp_col)?),
        Task::Classification => {
            let raw = table.strings(resp_col)?;
            let mut levels: Vec<String> = raw.clone();
            levels.sort();
            levels.dedup();
            if levels.len() != 2 {
                return Err(CvError::Csv(format!(
                    "classification response `{}` has {} distinct values, expected 2",
                    schema.response_column,
                    levels.len()
                )));
            }
            let coded: Vec<u8> =
                raw.iter().map(|v| u8::from(*v != levels[0])).collect();
            Response::Classification(coded)
        }
    };

    // Features: numeric columns pass through, categorical ones expand to
    // one-hot dummies with the first (lexicographic) level dropped.
    let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
    for name in &schema.feature_columns {
        let col = table.column(name)?;
        let raw = table.strings(col)?;
        let parsed: Option<Vec<f64>> = raw
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(values) => cols.push((name.clone(), values)),
            None => {
                let mut levels: Vec<String> = raw.clone();
                levels.sort();
                levels.dedup();
                for level in levels.iter().skip(1) {
                    let dummy: Vec<f64> =
                        raw.iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect();
                    cols.push((format!("{name}={level}"), dummy));
                }
            }
        }
    }
    let p = cols.len();
    let mut features = Mat::zeros(n, p);
    for (j, (_, values)) in cols.iter().enumerate() {
        for i in 0..n {
            features.set(i, j, values[i]);
        }
    }
    let feature_names = cols.into_iter().map(|(name, _)| name).collect();

    let groups = match &schema.group_column {
        Some(name) => Some(table.strings(table.column(name)?)?),
        None => None,
    };
    let strata = match &schema.strata_column {
        Some(name) => Some(table.strings(table.column(name)?)?),
        None => None,
    };
    let coords = match &schema.coord_columns {
        Some(names) => {
            let mut m = Mat::zeros(n, names.len());
            for (d, name) in names.iter().enumerate() {
                let v = table.numeric(table.column(name)?)?;
                for i in 0..n {
                    m.set(i, d, v[i]);
                }
            }
            Some(m)
        }
        None => None,
    };

    Dataset::new(features, response, groups, strata, coords, feature_names)
}

// ---------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Gaussian linear model: X ~ N(0,1) i.i.d., y = X·beta + sigma·eps.
pub fn simulate_linear_gaussian(n: usize, beta: &[f64], sigma: f64, seed: u64) -> Result<Dataset> {
    if n < beta.len() + 2 {
        return Err(CvError::invalid(format!(
            "n = {n} too small for {} coefficients",
            beta.len()
        )));
    }
    if sigma <= 0.0 {
        return Err(CvError::invalid("sigma must be positive"));
    }
    let p = beta.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let features = Mat::from_fn(n, p, |_, _| normal.sample(&mut rng));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mu = crate::linalg::dot(features.row(i), beta);
            mu + sigma * normal.sample(&mut rng)
        })
        .collect();
    Dataset::new(features, Response::Regression(y), None, None, None, feature_names(p))
}

/// Logistic model: X ~ N(0,1) i.i.d., P(y=1) = 1/(1+exp(-(b0 + X·beta))).
pub fn simulate_logistic(n: usize, intercept: f64, beta: &[f64], seed: u64) -> Result<Dataset> {
    if n < beta.len() + 2 {
        return Err(CvError::invalid("n too small for the coefficient count"));
    }
    let p = beta.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let features = Mat::from_fn(n, p, |_, _| normal.sample(&mut rng));
    let labels: Vec<u8> = (0..n)
        .map(|i| {
            let eta = intercept + crate::linalg::dot(features.row(i), beta);
            let prob = 1.0 / (1.0 + (-eta).exp());
            u8::from(rng.random::<f64>() < prob)
        })
        .collect();
    Dataset::new(features, Response::Classification(labels), None, None, None, feature_names(p))
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthTruth {
    pub l0: f64,
    pub k: f64,
    pub t0: f64,
    /// ± offset on L0 applied via the sex contrast.
    pub sex_effect_l0: f64,
    /// Standard deviation of the per-group L0 offsets.
    pub group_sd: f64,
    /// Residual noise standard deviation (0 for noiseless data).
    pub sigma: f64,
}

impl Default for GrowthTruth {
    fn default() -> Self {
        GrowthTruth { l0: 100.0, k: 0.6, t0: -0.2, sex_effect_l0: 4.0, group_sd: 6.0, sigma: 3.0 }
    }
}

/// Synthetic age/length data from a named growth function with per-group
/// L0 offsets (centred to sum to zero) and a two-level sex contrast.
/// Features: column 0 = age, column 1 = sex coded 0/1.
pub fn simulate_growth(
    function: crate::models::growth::GrowthFunction,
    n_groups: usize,
    per_group: usize,
    truth: &GrowthTruth,
    seed: u64,
) -> Result<Dataset> {
    if n_groups == 0 || per_group == 0 {
        return Err(CvError::invalid("need at least one group and one observation"));
    }
    let n = n_groups * per_group;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut offsets: Vec<f64> =
        (0..n_groups).map(|_| truth.group_sd * normal.sample(&mut rng)).collect();
    let mean_off = crate::linalg::mean(&offsets);
    for o in &mut offsets {
        *o -= mean_off;
    }

    let mut features = Mat::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for g in 0..n_groups {
        for j in 0..per_group {
            let i = g * per_group + j;
            let age = 0.3 + 7.5 * rng.random::<f64>();
            let sex01 = f64::from(rng.random::<bool>());
            let contrast = 2.0 * sex01 - 1.0;
            let l0 = truth.l0 + contrast * truth.sex_effect_l0 + offsets[g];
            let mu = function.value(l0, truth.k, truth.t0, age);
            features.set(i, 0, age);
            features.set(i, 1, sex01);
            let noise =
                if truth.sigma > 0.0 { truth.sigma * normal.sample(&mut rng) } else { 0.0 };
            y.push(mu + noise);
            groups.push(format!("g{g:02}"));
        }
    }
    Dataset::new(
        features,
        Response::Regression(y),
        Some(groups),
        None,
        None,
        vec!["age".into(), "sex".into()],
    )
}

/// Bundled demo datasets, generated from fixed seeds rather than shipped
/// as files. The CLI resolves `demo:<name>` dataset paths through
/// [`demo_dataset`].
pub mod demo {
    use super::*;

    /// Regression demo: 10 standard-normal features, 3 active
    /// (beta = 1, 0.5, 0.25), sigma = 1, n = 120.
    pub fn linear() -> Dataset {
        let mut beta = vec![0.0; 10];
        beta[0] = 1.0;
        beta[1] = 0.5;
        beta[2] = 0.25;
        simulate_linear_gaussian(120, &beta, 1.0, 202_401).expect("demo generator")
    }

    /// Classification demo: 10 features, 3 informative, n = 160.
    pub fn classification() -> Dataset {
        let beta = [1.6, -1.1, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        simulate_logistic(160, 0.2, &beta, 202_402).expect("demo generator")
    }

    /// Growth demo: von Bertalanffy lengths over 10 hauls of 12 fish.
    pub fn growth() -> Dataset {
        simulate_growth(
            crate::models::growth::GrowthFunction::VonBertalanffy,
            10,
            12,
            &GrowthTruth::default(),
            202_403,
        )
        .expect("demo generator")
    }
}

/// Resolve a `demo:<name>` specifier. Unknown names list the options.
pub fn demo_dataset(name: &str) -> Result<Dataset> {
    match name {
        "linear" => Ok(demo::linear()),
        "classification" => Ok(demo::classification()),
        "growth" => Ok(demo::growth()),
        other => Err(CvError::invalid(format!(
            "unknown demo dataset `{other}` (available: linear, classification, growth)"
        ))),
    }
}

/// Compact human description used in stderr summaries.
pub fn describe(data: &Dataset) -> String {
    let mut s = String::new();
    let _ = write!(s, "n={} p={} task={:?}", data.n(), data.p(), data.task());
    if let Some(g) = &data.groups {
        let mut levels = g.clone();
        levels.sort();
        levels.dedup();
        let _ = write!(s, " groups={}", levels.len());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV_SMALL: &str = "y,x1,x2\n1.0,2.0,3.0\n2.0,3.0,4.0\n3.5,4.0,5.0\n4.0,5.0,6.0\n";

    fn regression_schema() -> CsvSchema {
        CsvSchema {
            response_column: "y".into(),
            feature_columns: vec!["x1".into(), "x2".into()],
            group_column: None,
            strata_column: None,
            coord_columns: None,
            task: Task::Regression,
        }
    }

    #[test]
    fn loads_small_regression_csv() {
        let d = load_csv_str(CSV_SMALL, &regression_schema()).unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.p(), 2);
        assert_eq!(d.y(2), 3.5);
        assert_eq!(d.feature_row(1), &[3.0, 4.0]);
    }

    #[test]
    fn missing_value_is_rejected_with_location() {
        let csv = "y,x1,x2\n1.0,2.0,3.0\n2.0,,4.0\n";
        let err = load_csv_str(csv, &regression_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing value at row 2, column x1"), "{msg}");
    }

    #[test]
    fn nan_cell_is_rejected() {
        let csv = "y,x1,x2\n1.0,2.0,3.0\n2.0,NaN,4.0\n";
        let err = load_csv_str(csv, &regression_schema()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn binary_labels_recode_lexicographically() {
        let csv = "species,x1\ndog,1.0\ncat,2.0\ndog,3.0\ncat,4.0\n";
        let schema = CsvSchema {
            response_column: "species".into(),
            feature_columns: vec!["x1".into()],
            group_column: None,
            strata_column: None,
            coord_columns: None,
            task: Task::Classification,
        };
        let d = load_csv_str(csv, &schema).unwrap();
        // cat sorts first -> 0.
        assert_eq!(d.labels().unwrap(), &[1, 0, 1, 0]);
    }

    #[test]
    fn three_class_response_is_an_error() {
        let csv = "species,x1\ndog,1.0\ncat,2.0\nfox,3.0\n";
        let schema = CsvSchema {
            response_column: "species".into(),
            feature_columns: vec!["x1".into()],
            group_column: None,
            strata_column: None,
            coord_columns: None,
            task: Task::Classification,
        };
        assert!(load_csv_str(csv, &schema).is_err());
    }

    #[test]
    fn categorical_feature_one_hot_drops_first_level() {
        let csv = "y,site\n1.0,north\n2.0,south\n3.0,east\n4.0,north\n";
        let schema = CsvSchema {
            response_column: "y".into(),
            feature_columns: vec!["site".into()],
            group_column: None,
            strata_column: None,
            coord_columns: None,
            task: Task::Regression,
        };
        let d = load_csv_str(csv, &schema).unwrap();
        // levels sorted: east, north, south -> east dropped.
        assert_eq!(d.feature_names, vec!["site=north", "site=south"]);
        assert_eq!(d.feature_row(0), &[1.0, 0.0]);
        assert_eq!(d.feature_row(1), &[0.0, 1.0]);
        assert_eq!(d.feature_row(2), &[0.0, 0.0]);
    }

    #[test]
    fn missing_schema_column_is_an_error() {
        let schema = CsvSchema {
            response_column: "z".into(),
            feature_columns: vec!["x1".into()],
            group_column: None,
            strata_column: None,
            coord_columns: None,
            task: Task::Regression,
        };
        let err = load_csv_str(CSV_SMALL, &schema).unwrap_err();
        assert!(err.to_string().contains("missing column `z`"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = simulate_linear_gaussian(30, &[1.0, -0.5, 0.25], 0.7, 99).unwrap();
        let text = d.to_csv();
        let back = load_csv_str(&text, &d.derived_schema()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_round_trip_with_groups_and_coords() {
        let mut d = demo::growth();
        let n = d.n();
        d.coords = Some(Mat::from_fn(n, 2, |i, j| (i * 2 + j) as f64 / 7.0));
        let back = load_csv_str(&d.to_csv(), &d.derived_schema()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn simulate_is_deterministic_and_centred() {
        let a = simulate_linear_gaussian(100, &[0.0, 0.0, 0.0], 1.0, 5).unwrap();
        let b = simulate_linear_gaussian(100, &[0.0, 0.0, 0.0], 1.0, 5).unwrap();
        assert_eq!(a, b);
        let ybar = crate::linalg::mean(&(0..a.n()).map(|i| a.y(i)).collect::<Vec<_>>());
        assert!(ybar.abs() < 4.0 / (100f64).sqrt(), "ybar = {ybar}");
    }

    #[test]
    fn simulate_rejects_bad_arguments() {
        assert!(simulate_linear_gaussian(3, &[1.0, 1.0], 1.0, 0).is_err());
        assert!(simulate_linear_gaussian(50, &[1.0], 0.0, 0).is_err());
    }

    #[test]
    fn demo_datasets_have_expected_shapes() {
        let lin = demo::linear();
        assert_eq!((lin.n(), lin.p()), (120, 10));
        let cls = demo::classification();
        assert_eq!(cls.task(), Task::Classification);
        assert_eq!(cls.p(), 10);
        let g = demo::growth();
        assert_eq!(g.group_levels().len(), 10);
        assert_eq!(g.n(), 120);
        assert!(demo_dataset("nope").is_err());
    }
}
