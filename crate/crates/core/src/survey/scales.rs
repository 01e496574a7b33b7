use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::stats::{cronbach_alpha, mean, pearson_r, reverse_code, sample_variance, Alpha};
use super::SurveyError;

/// Ratings, one row per respondent and one column per item. `None` is a
/// blank answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    items: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
    scale_min: f64,
    scale_max: f64,
}

impl ResponseMatrix {
    pub fn new(
        items: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self, SurveyError> {
        if scale_min.is_nan() || scale_max.is_nan() || scale_min >= scale_max {
            return Err(SurveyError::Shape(format!(
                "scale {scale_min}..{scale_max} is empty"
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &items {
            if !seen.insert(id) {
                return Err(SurveyError::Shape(format!("item '{id}' appears twice")));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != items.len() {
                return Err(SurveyError::Shape(format!(
                    "respondent {} has {} answers for {} items",
                    i + 1,
                    r.len(),
                    items.len()
                )));
            }
            for v in r.iter().flatten() {
                if !(scale_min <= *v && *v <= scale_max) {
                    return Err(SurveyError::Range {
                        value: *v,
                        min: scale_min,
                        max: scale_max,
                    });
                }
            }
        }
        Ok(ResponseMatrix {
            items,
            rows,
            scale_min,
            scale_max,
        })
    }

    /// Header row of item ids, one row per respondent, blank cells missing.
    pub fn from_csv<R: Read>(
        input: R,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self, SurveyError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let items: Vec<String> = r
            .headers()
            .map_err(|e| SurveyError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| SurveyError::Csv(e.to_string()))?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|_| {
                            SurveyError::Csv(format!(
                                "respondent {}, item '{}': '{cell}' is not a number",
                                i + 1,
                                items[j]
                            ))
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        ResponseMatrix::new(items, rows, scale_min, scale_max)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn respondents(&self) -> usize {
        self.rows.len()
    }

    pub fn scale(&self) -> (f64, f64) {
        (self.scale_min, self.scale_max)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|i| i == id)
    }

    /// Same respondents in a different order.
    pub fn permuted(&self, order: &[usize]) -> ResponseMatrix {
        ResponseMatrix {
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// One questionnaire scale. Items may be grouped into factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDef {
    pub name: String,
    /// Items scored only as part of the whole scale.
    #[serde(default)]
    pub items: Vec<String>,
    #[serde(default)]
    pub reverse: BTreeSet<String>,
    #[serde(default)]
    pub factors: BTreeMap<String, Vec<String>>,
}

impl ScaleDef {
    /// Every item of the scale, factor items first, without repeats.
    pub fn all_items(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for id in self.factors.values().flatten().chain(&self.items) {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDef {
    pub x: String,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Fraction of a factor's items that must be answered for a score.
    #[serde(default = "default_min_fraction")]
    pub min_answered: f64,
    #[serde(default, rename = "scale")]
    pub scales: Vec<ScaleDef>,
    /// Score columns to correlate.
    #[serde(default, rename = "correlate")]
    pub correlations: Vec<CorrelationDef>,
}

fn default_min_fraction() -> f64 {
    0.5
}

impl ScaleSet {
    pub fn from_toml(text: &str) -> Result<Self, SurveyError> {
        toml::from_str(text).map_err(|e| SurveyError::Toml(e.to_string()))
    }

    /// Fails on the first item id the matrix does not have.
    pub fn check_items(&self, m: &ResponseMatrix) -> Result<(), SurveyError> {
        for s in &self.scales {
            for id in s.all_items().iter().chain(&s.reverse) {
                if m.item_index(id).is_none() {
                    return Err(SurveyError::UnknownItem(id.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub column: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Per-respondent scores, one column per scale and per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ScoreTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn summary(&self) -> Vec<ColumnSummary> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let v: Vec<f64> = self.rows.iter().filter_map(|r| r[j]).collect();
                ColumnSummary {
                    column: c.clone(),
                    n: v.len(),
                    mean: (!v.is_empty()).then(|| mean(&v)),
                    sd: (v.len() > 1).then(|| sample_variance(&v).sqrt()),
                }
            })
            .collect()
    }

    /// `respondent` column (1-based) then the scores; blank when missing.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SurveyError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| SurveyError::Csv(e.to_string());
        let mut header = vec!["respondent".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(
                r.iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| SurveyError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SurveyError> {
        let m = ResponseMatrix::from_csv(input, f64::MIN, f64::MAX)?;
        let columns = m.items()[1..].to_vec();
        let rows = m.rows().iter().map(|r| r[1..].to_vec()).collect();
        Ok(ScoreTable { columns, rows })
    }
}

/// Reverse-coded copy of respondent `row` restricted to `ids`.
fn answers(m: &ResponseMatrix, def: &ScaleDef, ids: &[String], row: usize) -> Vec<Option<f64>> {
    let (lo, hi) = m.scale();
    ids.iter()
        .map(|id| {
            let v = m.rows[row][m.item_index(id).expect("checked")]?;
            Some(if def.reverse.contains(id) {
                reverse_code(v, lo, hi).expect("matrix values are in range")
            } else {
                v
            })
        })
        .collect()
}

fn available_mean(values: &[Option<f64>], min_fraction: f64) -> Option<f64> {
    let got: Vec<f64> = values.iter().flatten().copied().collect();
    let needed = (values.len() as f64 * min_fraction).ceil().max(1.0) as usize;
    (got.len() >= needed).then(|| mean(&got))
}

/// Scores each respondent on every scale (all items) and every factor
/// (`scale.factor`). Reverse-coded items are flipped first; a score is the
/// mean of the answered items and is missing when fewer than
/// `min_answered` of them were answered.
pub fn score_scales(m: &ResponseMatrix, set: &ScaleSet) -> Result<ScoreTable, SurveyError> {
    set.check_items(m)?;
    let mut groups: Vec<(String, &ScaleDef, Vec<String>)> = Vec::new();
    for s in &set.scales {
        groups.push((s.name.clone(), s, s.all_items()));
        for (f, ids) in &s.factors {
            groups.push((format!("{}.{f}", s.name), s, ids.clone()));
        }
    }
    let rows = (0..m.respondents())
        .map(|r| {
            groups
                .iter()
                .map(|(_, def, ids)| available_mean(&answers(m, def, ids, r), set.min_answered))
                .collect()
        })
        .collect();
    Ok(ScoreTable {
        columns: groups.into_iter().map(|(c, _, _)| c).collect(),
        rows,
    })
}

/// Alpha for one scale, on reverse-coded answers.
pub fn scale_alpha(m: &ResponseMatrix, def: &ScaleDef) -> Result<Alpha, SurveyError> {
    let ids = def.all_items();
    for id in ids.iter().chain(&def.reverse) {
        if m.item_index(id).is_none() {
            return Err(SurveyError::UnknownItem(id.clone()));
        }
    }
    let rows: Vec<Vec<Option<f64>>> = (0..m.respondents())
        .map(|r| answers(m, def, &ids, r))
        .collect();
    cronbach_alpha(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub scale: String,
    #[serde(flatten)]
    pub result: Option<Alpha>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub x: String,
    pub y: String,
    /// Respondents with both scores.
    pub n: usize,
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub respondents: usize,
    pub alpha: Vec<AlphaEntry>,
    pub correlations: Vec<CorrelationEntry>,
    pub columns: Vec<ColumnSummary>,
}

impl SurveySummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Scores plus alpha per scale and the requested correlations.
pub fn analyze(
    m: &ResponseMatrix,
    set: &ScaleSet,
) -> Result<(ScoreTable, SurveySummary), SurveyError> {
    let table = score_scales(m, set)?;
    let alpha = set
        .scales
        .iter()
        .map(|s| match scale_alpha(m, s) {
            Ok(a) => AlphaEntry {
                scale: s.name.clone(),
                result: Some(a),
                error: None,
            },
            Err(e) => AlphaEntry {
                scale: s.name.clone(),
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut correlations = Vec::new();
    for c in &set.correlations {
        let (Some(x), Some(y)) = (table.column(&c.x), table.column(&c.y)) else {
            let missing = if table.column(&c.x).is_none() {
                &c.x
            } else {
                &c.y
            };
            return Err(SurveyError::UnknownColumn(missing.clone()));
        };
        let (xs, ys): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(&y)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .unzip();
        let (r, error) = match pearson_r(&xs, &ys) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        correlations.push(CorrelationEntry {
            x: c.x.clone(),
            y: c.y.clone(),
            n: xs.len(),
            r,
            error,
        });
    }
    let summary = SurveySummary {
        respondents: m.respondents(),
        alpha,
        correlations,
        columns: table.summary(),
    };
    Ok((table, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(csv: &str) -> ResponseMatrix {
        ResponseMatrix::from_csv(csv.as_bytes(), 1.0, 7.0).unwrap()
    }

    fn set(toml: &str) -> ScaleSet {
        ScaleSet::from_toml(toml).unwrap()
    }

    #[test]
    fn all_sevens() {
        let m = matrix("a,b,c\n7,7,7\n");
        let s = set("scale_min = 1.0\nscale_max = 7.0\n[[scale]]\nname = \"p\"\n[scale.factors]\nSensory = [\"a\", \"b\", \"c\"]\n");
        let t = score_scales(&m, &s).unwrap();
        assert_eq!(t.columns, vec!["p", "p.Sensory"]);
        assert_eq!(t.rows[0], vec![Some(7.0), Some(7.0)]);
    }

    #[test]
    fn reverse_item_flipped() {
        let m = matrix("a,b,c\n7,7,1\n");
        let s = set("scale_min = 1.0\nscale_max = 7.0\n[[scale]]\nname = \"p\"\nitems = [\"a\", \"b\", \"c\"]\nreverse = [\"c\"]\n");
        assert_eq!(score_scales(&m, &s).unwrap().rows[0], vec![Some(7.0)]);
    }

    #[test]
    fn too_many_missing() {
        let m = matrix("a,b,c,d\n7,,,\n5,6,,\n,,,\n");
        let s = set("scale_min = 1.0\nscale_max = 7.0\n[[scale]]\nname = \"p\"\nitems = [\"a\", \"b\", \"c\", \"d\"]\n");
        let t = score_scales(&m, &s).unwrap();
        assert_eq!(t.rows[0], vec![None]);
        assert_eq!(t.rows[1], vec![Some(5.5)]);
        assert_eq!(t.rows[2], vec![None]);
    }

    #[test]
    fn unknown_item_named() {
        let m = matrix("a,b\n1,2\n");
        let s = set(
            "scale_min = 1.0\nscale_max = 7.0\n[[scale]]\nname = \"p\"\nitems = [\"a\", \"zz\"]\n",
        );
        assert_eq!(
            score_scales(&m, &s),
            Err(SurveyError::UnknownItem("zz".into()))
        );
    }

    #[test]
    fn out_of_range_value_rejected() {
        assert!(matches!(
            ResponseMatrix::from_csv("a\n9\n".as_bytes(), 1.0, 7.0),
            Err(SurveyError::Range { .. })
        ));
        assert!(matches!(
            ResponseMatrix::from_csv("a\nx\n".as_bytes(), 1.0, 7.0),
            Err(SurveyError::Csv(_))
        ));
    }

    #[test]
    fn analysis_summary() {
        let m = matrix("q1,q2,q3\n1,1,7\n4,4,4\n6,6,2\n3,3,5\n");
        let s = set(
            "scale_min = 1.0\nscale_max = 7.0\n[[scale]]\nname = \"twin\"\nitems = [\"q1\", \"q2\"]\n[[scale]]\nname = \"other\"\nitems = [\"q3\"]\n[[correlate]]\nx = \"twin\"\ny = \"other\"\n",
        );
        let (table, summary) = analyze(&m, &s).unwrap();
        assert_eq!(summary.alpha[0].result.unwrap().alpha, 1.0);
        assert!(summary.alpha[1].error.is_some());
        let r = summary.correlations[0].r.unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&summary.to_json()).unwrap();
        assert_eq!(json["alpha"][0]["alpha"], 1.0);

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = ScoreTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back, table);
    }
}
