//! Study files: phenotype, covariates, genotypes, SNP sets and custom
//! kernels, all tab-separated with a header row.
//!
//! Sample-keyed tables start with a `sample_id` column; `NA` (or an empty
//! field) marks a missing value. Samples are inner-joined across the
//! phenotype, covariate and genotype tables and sorted by ID, so the input
//! row order never matters.

use crate::error::{Result, RobkatError};
use crate::kernel::{GenotypeMatrix, KernelMatrix};
use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

/// Tokens read as a missing value.
const MISSING: [&str; 3] = ["NA", "nan", ""];

/// A sample-keyed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    /// Row ID → values, `None` for missing. Rows are kept in file order.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    fn index(&self) -> HashMap<&str, usize> {
        self.rows.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect()
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| RobkatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> RobkatError {
    RobkatError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_value(field: &str, path: &Path, line: usize, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if MISSING.contains(&field) {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(parse_error(path, line, format!("column `{column}`: `{field}` is not a number"))),
    }
}

/// Parse a sample-keyed table. The first header cell must be `sample_id`.
pub fn parse_table(text: &str, path: &Path) -> Result<Table> {
    let mut lines = data_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "file is empty"))?;
    let mut cells = header.split('\t').map(str::trim);
    if cells.next() != Some("sample_id") {
        return Err(parse_error(path, hline, "the first column must be `sample_id`"));
    }
    let columns: Vec<String> = cells.map(String::from).collect();
    if columns.is_empty() {
        return Err(parse_error(path, hline, "no data columns"));
    }

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != columns.len() + 1 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", columns.len() + 1, fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty sample ID"));
        }
        if !seen.insert(id.clone()) {
            return Err(RobkatError::Input(format!(
                "{}:{line}: duplicate sample ID `{id}`",
                path.display()
            )));
        }
        let values = fields[1..]
            .iter()
            .zip(&columns)
            .map(|(f, c)| parse_value(f, path, line, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(Table { columns, rows })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(&read_text(path)?, path)
}

/// A named group of SNP IDs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnpSet {
    pub name: String,
    pub snps: Vec<String>,
}

/// Parse a two-column `set_name`/`snp_id` file. A header line naming those
/// columns is optional. Sets keep the order of first appearance and repeated
/// SNPs within a set are ignored.
pub fn parse_sets(text: &str, path: &Path) -> Result<Vec<SnpSet>> {
    let mut sets: Vec<SnpSet> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (k, (line, l)) in data_lines(text).enumerate() {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error(path, line, "expected two fields: set name and SNP ID"));
        }
        if k == 0 && fields[0] == "set_name" && fields[1] == "snp_id" {
            continue;
        }
        let i = *index.entry(fields[0].to_string()).or_insert_with(|| {
            sets.push(SnpSet {
                name: fields[0].to_string(),
                snps: Vec::new(),
            });
            sets.len() - 1
        });
        if !sets[i].snps.iter().any(|s| s == fields[1]) {
            sets[i].snps.push(fields[1].to_string());
        }
    }
    if sets.is_empty() {
        return Err(parse_error(path, 1, "no SNP sets"));
    }
    Ok(sets)
}

pub fn read_sets(path: &Path) -> Result<Vec<SnpSet>> {
    parse_sets(&read_text(path)?, path)
}

/// Phenotype, covariates, genotypes and SNP sets on a common, sorted set of
/// samples.
#[derive(Debug, Clone)]
pub struct StudyData {
    pub sample_ids: Vec<String>,
    pub phenotype: DVector<f64>,
    /// `n × q`, without an intercept column.
    pub covariates: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub genotypes: GenotypeMatrix,
    /// Sets restricted to SNPs present in the genotypes; a set may be empty.
    pub snp_sets: Vec<SnpSet>,
    /// Human-readable notes about dropped samples and SNPs.
    pub warnings: Vec<String>,
}

impl StudyData {
    pub fn n(&self) -> usize {
        self.sample_ids.len()
    }

    /// Genotype column indices of a set.
    pub fn set_columns(&self, set: &SnpSet) -> Vec<usize> {
        let pos: HashMap<&str, usize> = self
            .genotypes
            .snp_ids()
            .iter()
            .enumerate()
            .map(|(j, s)| (s.as_str(), j))
            .collect();
        set.snps.iter().filter_map(|s| pos.get(s.as_str()).copied()).collect()
    }
}

/// Join in-memory tables into a study. `covar` may be absent (intercept-only
/// models). The phenotype is the first data column of `pheno`.
pub fn assemble_study(
    pheno: &Table,
    covar: Option<&Table>,
    geno: &Table,
    sets: Vec<SnpSet>,
) -> Result<StudyData> {
    let mut warnings = Vec::new();
    if pheno.columns.len() > 1 {
        warnings.push(format!(
            "phenotype file has {} columns; using `{}`",
            pheno.columns.len(),
            pheno.columns[0]
        ));
    }
    let covar_idx = covar.map(Table::index);
    let geno_idx = geno.index();

    // Samples with a phenotype and complete covariates, keyed and sorted by ID.
    let mut joined: BTreeMap<&str, (f64, Option<usize>, usize)> = BTreeMap::new();
    let mut dropped_missing = Vec::new();
    for (id, values) in &pheno.rows {
        let Some(&g) = geno_idx.get(id.as_str()) else { continue };
        let c = match (&covar, &covar_idx) {
            (Some(t), Some(idx)) => match idx.get(id.as_str()) {
                Some(&c) => {
                    if t.rows[c].1.iter().any(Option::is_none) {
                        dropped_missing.push(id.as_str());
                        continue;
                    }
                    Some(c)
                }
                None => continue,
            },
            _ => None,
        };
        let Some(y) = values[0] else {
            dropped_missing.push(id.as_str());
            continue;
        };
        joined.insert(id.as_str(), (y, c, g));
    }
    if !dropped_missing.is_empty() {
        dropped_missing.sort_unstable();
        warnings.push(format!(
            "{} samples dropped for a missing phenotype or covariate: {}",
            dropped_missing.len(),
            dropped_missing.join(",")
        ));
    }
    if joined.is_empty() {
        return Err(RobkatError::Input("no samples are shared by all input files".into()));
    }
    let n = joined.len();
    let q = covar.map_or(0, |t| t.columns.len());
    if n < q + 2 {
        return Err(RobkatError::Input(format!(
            "{n} samples after joining, but {q} covariates need at least {}",
            q + 2
        )));
    }

    let sample_ids: Vec<String> = joined.keys().map(|s| s.to_string()).collect();
    let phenotype = DVector::from_iterator(n, joined.values().map(|v| v.0));
    let covariates = match covar {
        Some(t) => {
            let rows: Vec<usize> = joined.values().map(|v| v.1.unwrap()).collect();
            DMatrix::from_fn(n, q, |i, j| t.rows[rows[i]].1[j].unwrap())
        }
        None => DMatrix::zeros(n, 0),
    };
    let rows: Vec<usize> = joined.values().map(|v| v.2).collect();
    let values = DMatrix::from_fn(n, geno.columns.len(), |i, j| {
        geno.rows[rows[i]].1[j].unwrap_or(f64::NAN)
    });
    let genotypes = GenotypeMatrix::new(values, sample_ids.clone(), geno.columns.clone())?;

    let known: HashSet<&str> = geno.columns.iter().map(String::as_str).collect();
    let snp_sets = sets
        .into_iter()
        .map(|set| {
            let (kept, unknown): (Vec<String>, Vec<String>) =
                set.snps.into_iter().partition(|s| known.contains(s.as_str()));
            if !unknown.is_empty() {
                warnings.push(format!(
                    "set `{}`: {} SNPs not in the genotype file dropped: {}",
                    set.name,
                    unknown.len(),
                    unknown.join(",")
                ));
            }
            SnpSet { name: set.name, snps: kept }
        })
        .collect();

    Ok(StudyData {
        sample_ids,
        phenotype,
        covariates,
        covariate_names: covar.map_or_else(Vec::new, |t| t.columns.clone()),
        genotypes,
        snp_sets,
        warnings,
    })
}

/// Read and join the study files. Warnings are logged and kept on the
/// result.
pub fn load_study(
    pheno_path: &Path,
    covar_path: Option<&Path>,
    geno_path: &Path,
    sets_path: &Path,
) -> Result<StudyData> {
    let pheno = read_table(pheno_path)?;
    let covar = covar_path.map(read_table).transpose()?;
    let geno = read_table(geno_path)?;
    let sets = read_sets(sets_path)?;
    let study = assemble_study(&pheno, covar.as_ref(), &geno, sets)?;
    for w in &study.warnings {
        log::warn!("{w}");
    }
    Ok(study)
}

/// Read a custom kernel: a header row `sample_id  id_1 … id_m`, then one row
/// per sample in the same order, and restrict it to `samples` (in that
/// order). Every requested sample must be present.
pub fn read_custom_kernel(path: &Path, samples: &[String]) -> Result<KernelMatrix> {
    let table = read_table(path)?;
    let m = table.columns.len();
    if table.rows.len() != m {
        return Err(RobkatError::Input(format!(
            "{}: kernel header lists {m} samples but there are {} rows",
            path.display(),
            table.rows.len()
        )));
    }
    for (i, (id, _)) in table.rows.iter().enumerate() {
        if *id != table.columns[i] {
            return Err(RobkatError::Input(format!(
                "{}: row {} is `{id}` but column {} is `{}`",
                path.display(),
                i + 1,
                i + 1,
                table.columns[i]
            )));
        }
    }
    let idx = table.index();
    let pick = samples
        .iter()
        .map(|s| {
            idx.get(s.as_str()).copied().ok_or_else(|| {
                RobkatError::Input(format!("{}: sample `{s}` is missing from the kernel", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = DMatrix::zeros(samples.len(), samples.len());
    for (a, &i) in pick.iter().enumerate() {
        for (b, &j) in pick.iter().enumerate() {
            matrix[(a, b)] = table.rows[i].1[j].ok_or_else(|| {
                RobkatError::Input(format!("{}: missing kernel entry", path.display()))
            })?;
        }
    }
    KernelMatrix::custom(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.tsv")
    }

    #[test]
    fn tables_parse_with_missing_values() {
        let t = parse_table("sample_id\ty\tx\nA\t1.5\tNA\nB\t-2\t3\n", p()).unwrap();
        assert_eq!(t.columns, vec!["y", "x"]);
        assert_eq!(t.rows[0].1, vec![Some(1.5), None]);
    }

    #[test]
    fn malformed_fields_report_line_numbers() {
        let err = parse_table("sample_id\ty\nA\t1\n\nB\tabc\n", p()).unwrap_err();
        match err {
            RobkatError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e}"),
        }
        assert!(parse_table("id\ty\nA\t1\n", p()).is_err());
        assert!(parse_table("sample_id\ty\nA\t1\t2\n", p()).is_err());
        assert!(matches!(
            parse_table("sample_id\ty\nA\t1\nA\t2\n", p()),
            Err(RobkatError::Input(_))
        ));
    }

    #[test]
    fn sets_parse_with_optional_header() {
        let s = parse_sets("set_name\tsnp_id\nG1\trs1\nG2\trs2\nG1\trs3\nG1\trs1\n", p()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].snps, vec!["rs1", "rs3"]);
        let s = parse_sets("G1\trs1\n", p()).unwrap();
        assert_eq!(s[0].name, "G1");
        assert!(parse_sets("G1\n", p()).is_err());
    }

    fn tables() -> (Table, Table, Table) {
        let pheno = parse_table("sample_id\ty\nC\t3\nA\t1\nB\t2\nE\t5\n", p()).unwrap();
        let covar = parse_table("sample_id\tage\nA\t30\nB\t40\nC\t50\nE\tNA\n", p()).unwrap();
        let geno =
            parse_table("sample_id\trs1\trs2\nD\t0\t1\nB\t1\tNA\nA\t2\t0\nC\t0\t1\nE\t1\t1\n", p()).unwrap();
        (pheno, covar, geno)
    }

    #[test]
    fn inner_join_sorts_and_drops() {
        let (pheno, covar, geno) = tables();
        let sets = vec![SnpSet {
            name: "G".into(),
            snps: vec!["rs2".into(), "rs9".into()],
        }];
        let s = assemble_study(&pheno, Some(&covar), &geno, sets).unwrap();
        assert_eq!(s.sample_ids, vec!["A", "B", "C"]);
        assert_eq!(s.phenotype.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.covariates.column(0).as_slice(), &[30.0, 40.0, 50.0]);
        assert_eq!(s.genotypes.values()[(0, 0)], 2.0);
        assert!(s.genotypes.values()[(1, 1)].is_nan());
        assert_eq!(s.snp_sets[0].snps, vec!["rs2"]);
        assert_eq!(s.set_columns(&s.snp_sets[0]), vec![1]);
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn missing_phenotype_excludes_sample() {
        let (_, _, geno) = tables();
        let pheno = parse_table("sample_id\ty\nA\t1\nB\tNA\nC\t3\nD\t4\n", p()).unwrap();
        let s = assemble_study(&pheno, None, &geno, vec![]).unwrap();
        assert_eq!(s.sample_ids, vec!["A", "C", "D"]);
        assert_eq!(s.covariates.ncols(), 0);
    }

    #[test]
    fn empty_join_is_an_error() {
        let (_, covar, geno) = tables();
        let pheno = parse_table("sample_id\ty\nZ\t1\n", p()).unwrap();
        assert!(matches!(
            assemble_study(&pheno, Some(&covar), &geno, vec![]),
            Err(RobkatError::Input(_))
        ));
    }
}
