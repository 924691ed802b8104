//! Delimiter-separated file formats.
//!
//! Every format has a mandatory header row and may carry `# key=value`
//! metadata lines before it. Angles are written in degrees with six
//! decimals; other reals use the shortest representation that reads back
//! exactly.

use std::io::Write;
use std::path::Path;

use nonlocal_core::channels::Branch;
use nonlocal_core::fit::Point;
use nonlocal_core::measure::{
    AnalyzerSetting, CoincidenceRow, CoincidenceTable, JointObservables, TableMetadata,
};
use nonlocal_core::states::TwoQubitState;
use nonlocal_core::tomography::{PolLabel, TomographyBasisSet, TomographySetting};

use crate::config::SupplementaryConfig;
use crate::error::{LabError, Result};

pub const TABLE_HEADER: [&str; 6] = [
    "setting_a_id",
    "setting_b_id",
    "n_pp",
    "n_pm",
    "n_mp",
    "n_mm",
];
pub const TOMOGRAPHY_HEADER: [&str; 3] = ["basis_label_a", "basis_label_b", "count"];
pub const OBSERVABLES_HEADER: [&str; 7] = [
    "branch", "m_zz", "m_xz", "m_zx", "sigma_zz", "sigma_xz", "sigma_zx",
];
pub const MATRIX_HEADER: [&str; 4] = ["row", "col", "re", "im"];

pub type Metadata = Vec<(String, String)>;

/// Radians to degrees with six decimals.
pub fn deg(x: f64) -> String {
    format!("{:.6}", x.to_degrees())
}

pub fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Plus => "plus",
        Branch::Minus => "minus",
    }
}

pub fn parse_branch(s: &str) -> Option<Branch> {
    match s.trim() {
        "plus" | "psi_plus" | "+" => Some(Branch::Plus),
        "minus" | "psi_minus" | "-" => Some(Branch::Minus),
        _ => None,
    }
}

pub fn write_metadata(w: &mut impl Write, meta: &[(String, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Metadata pairs and the remaining text, with the line offset of the body.
fn split_metadata(text: &str) -> (Metadata, String) {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        match line.trim_start().strip_prefix('#') {
            Some(c) => {
                if let Some((k, v)) = c.split_once('=') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                // keep line numbers aligned for error messages
                body.push('\n');
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    (meta, body)
}

pub fn lookup<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Records below the header, each with its 1-based line number.
fn records(body: &str, header: &[&str], file: &str) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(body.as_bytes());
    let got = rdr.headers()?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(LabError::parse(
            file,
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn real(field: &str, file: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| LabError::parse(file, line, format!("`{field}` is not a finite number")))
}

fn count(field: &str, file: &str, line: usize) -> Result<f64> {
    let x = real(field, file, line)?;
    if x < 0.0 {
        return Err(LabError::parse(file, line, format!("negative count {x}")));
    }
    Ok(x)
}

pub fn table_metadata_pairs(meta: &TableMetadata) -> Metadata {
    let mut out = Vec::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    put("pair_flux", meta.pair_flux.map(|x| x.to_string()));
    put("duration", meta.duration.map(|x| x.to_string()));
    put("seed", meta.seed.map(|x| x.to_string()));
    put("transmission_a", meta.transmission_a.map(|x| x.to_string()));
    put("transmission_b", meta.transmission_b.map(|x| x.to_string()));
    put(
        "accidental_fraction",
        meta.accidental_fraction.map(|x| x.to_string()),
    );
    put("exact", Some(meta.exact.to_string()));
    out.extend(meta.extra.iter().cloned());
    out
}

pub fn write_table(w: &mut impl Write, table: &CoincidenceTable) -> Result<()> {
    write_metadata(w, &table_metadata_pairs(&table.meta))?;
    writeln!(w, "{}", TABLE_HEADER.join(","))?;
    for r in &table.rows {
        let [pp, pm, mp, mm] = r.counts;
        writeln!(
            w,
            "{},{},{pp},{pm},{mp},{mm}",
            r.setting_a.id(),
            r.setting_b.id()
        )?;
    }
    Ok(())
}

pub fn read_table(text: &str, file: &str) -> Result<CoincidenceTable> {
    let (pairs, body) = split_metadata(text);
    let mut meta = TableMetadata::default();
    for (k, v) in pairs {
        let num = |v: &str| real(v, file, 0);
        match k.as_str() {
            "pair_flux" => meta.pair_flux = Some(num(&v)?),
            "duration" => meta.duration = Some(num(&v)?),
            "transmission_a" => meta.transmission_a = Some(num(&v)?),
            "transmission_b" => meta.transmission_b = Some(num(&v)?),
            "accidental_fraction" => meta.accidental_fraction = Some(num(&v)?),
            "seed" => {
                meta.seed = Some(
                    v.parse()
                        .map_err(|_| LabError::parse(file, 0, format!("bad seed `{v}`")))?,
                )
            }
            "exact" => meta.exact = v == "true",
            _ => meta.extra.push((k, v)),
        }
    }
    let mut rows = Vec::new();
    for (line, rec) in records(&body, &TABLE_HEADER, file)? {
        if rec.len() != 6 {
            return Err(LabError::parse(file, line, "expected 6 fields"));
        }
        let setting = |s: &str| {
            AnalyzerSetting::parse_id(s).map_err(|e| LabError::parse(file, line, e.to_string()))
        };
        let mut counts = [0.0; 4];
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = count(&rec[2 + k], file, line)?;
        }
        rows.push(CoincidenceRow {
            setting_a: setting(&rec[0])?,
            setting_b: setting(&rec[1])?,
            counts,
        });
    }
    let table = CoincidenceTable { rows, meta };
    table.validate()?;
    Ok(table)
}

/// Rows labelled `plus`, `minus`, or `none` for states outside the Bell pair.
pub fn write_observables(
    w: &mut impl Write,
    rows: &[(Option<Branch>, JointObservables)],
) -> Result<()> {
    writeln!(w, "{}", OBSERVABLES_HEADER.join(","))?;
    for (b, o) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.map_or("none", branch_name),
            o.m_zz,
            o.m_xz,
            o.m_zx,
            o.sigma_zz,
            o.sigma_xz,
            o.sigma_zx
        )?;
    }
    Ok(())
}

pub fn read_observables(text: &str, file: &str) -> Result<Vec<(Option<Branch>, JointObservables)>> {
    let (_, body) = split_metadata(text);
    records(&body, &OBSERVABLES_HEADER, file)?
        .into_iter()
        .map(|(line, rec)| {
            let b = match &rec[0] {
                "none" => None,
                other => Some(parse_branch(other).ok_or_else(|| {
                    LabError::parse(file, line, format!("unknown branch `{other}`"))
                })?),
            };
            let v: Vec<f64> = (1..7)
                .map(|i| real(&rec[i], file, line))
                .collect::<Result<_>>()?;
            if v[3..].iter().any(|&s| s < 0.0) {
                return Err(LabError::parse(file, line, "negative uncertainty"));
            }
            Ok((
                b,
                JointObservables {
                    m_zz: v[0],
                    m_xz: v[1],
                    m_zx: v[2],
                    sigma_zz: v[3],
                    sigma_xz: v[4],
                    sigma_zx: v[5],
                },
            ))
        })
        .collect()
}

pub fn write_tomography_counts(
    w: &mut impl Write,
    set: &TomographyBasisSet,
    counts: &[f64],
    meta: &[(String, String)],
) -> Result<()> {
    write_metadata(w, meta)?;
    writeln!(w, "{}", TOMOGRAPHY_HEADER.join(","))?;
    for (s, n) in set.settings.iter().zip(counts) {
        writeln!(w, "{},{},{n}", s.a.as_char(), s.b.as_char())?;
    }
    Ok(())
}

/// Projectors in file order with their counts. Duplicate projectors are
/// rejected.
pub fn read_tomography_counts(
    text: &str,
    file: &str,
) -> Result<(TomographyBasisSet, Vec<f64>, Metadata)> {
    let (meta, body) = split_metadata(text);
    let mut settings: Vec<TomographySetting> = Vec::new();
    let mut counts = Vec::new();
    for (line, rec) in records(&body, &TOMOGRAPHY_HEADER, file)? {
        let label =
            |s: &str| PolLabel::parse(s).map_err(|e| LabError::parse(file, line, e.to_string()));
        let s = TomographySetting::new(label(&rec[0])?, label(&rec[1])?);
        if settings.iter().any(|t| t.a == s.a && t.b == s.b) {
            return Err(LabError::parse(file, line, "duplicate projector"));
        }
        settings.push(s);
        counts.push(count(&rec[2], file, line)?);
    }
    Ok((TomographyBasisSet { settings }, counts, meta))
}

/// Row-major `(HH, HV, VH, VV)` entries.
pub fn write_density_matrix(w: &mut impl Write, rho: &TwoQubitState) -> Result<()> {
    writeln!(w, "{}", MATRIX_HEADER.join(","))?;
    for (k, (re, im)) in rho.to_row_major().iter().enumerate() {
        writeln!(w, "{},{},{re},{im}", k / 4, k % 4)?;
    }
    Ok(())
}

pub fn read_density_matrix(text: &str, file: &str) -> Result<TwoQubitState> {
    let (_, body) = split_metadata(text);
    let mut entries = [(0.0, 0.0); 16];
    let mut seen = [false; 16];
    for (line, rec) in records(&body, &MATRIX_HEADER, file)? {
        let idx = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&i| i < 4)
                .ok_or_else(|| LabError::parse(file, line, format!("bad index `{s}`")))
        };
        let k = 4 * idx(&rec[0])? + idx(&rec[1])?;
        if seen[k] {
            return Err(LabError::parse(file, line, "duplicate entry"));
        }
        seen[k] = true;
        entries[k] = (real(&rec[2], file, line)?, real(&rec[3], file, line)?);
    }
    if seen.iter().any(|s| !s) {
        return Err(LabError::parse(
            file,
            0,
            "density matrix needs all 16 entries",
        ));
    }
    Ok(TwoQubitState::from_row_major(&entries)?)
}

/// `(x, y, σ)` points from an external CSV with named columns. Without a
/// σ column every point gets σ = 1.
pub fn read_xy(path: &Path, cols: &SupplementaryConfig) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
    let file = path.display().to_string();
    let (_, body) = split_metadata(&text);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::parse(&file, 1, format!("missing column `{name}`")))
    };
    let (ix, iy) = (find(&cols.x_column)?, find(&cols.y_column)?);
    let is = cols.sigma_column.as_deref().map(find).transpose()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| real(rec.get(i).unwrap_or(""), &file, line);
        let sigma = match is {
            Some(i) => get(i)?,
            None => 1.0,
        };
        out.push((get(ix)?, get(iy)?, sigma));
    }
    Ok(out)
}
