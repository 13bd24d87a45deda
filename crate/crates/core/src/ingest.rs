//! Reading grid cases into [`BranchRecord`]s.
//!
//! Two formats are understood: a subset of the MATPOWER case file (only
//! `baseMVA`, `bus` and `branch` are interpreted) and a flat branch CSV.
//! Line lengths missing from the input can be estimated from endpoint
//! coordinates with [`fill_line_lengths`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid_model::{BaseQuantities, BranchKind, BranchRecord, GeoPoint, DEFAULT_KV_TOLERANCE};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Column names of the branch CSV format, in file order.
pub const CSV_COLUMNS: [&str; 15] = [
    "id",
    "kind",
    "from_bus",
    "to_bus",
    "kv_high",
    "kv_low",
    "x_pu",
    "r_pu",
    "s_base_mva",
    "rating_mva",
    "length_km",
    "from_lat",
    "from_lon",
    "to_lat",
    "to_lon",
];

const CSV_MANDATORY: [&str; 7] = ["id", "kind", "kv_high", "kv_low", "x_pu", "r_pu", "s_base_mva"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    MatpowerSubset,
    BranchCsv,
}

impl CaseFormat {
    /// `.m` files are MATPOWER, everything else is treated as branch CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("m") => CaseFormat::MatpowerSubset,
            _ => CaseFormat::BranchCsv,
        }
    }
}

/// Where a case came from and which system base applies to it.
#[derive(Debug, Clone)]
pub struct CaseSource {
    pub format: CaseFormat,
    pub path: std::path::PathBuf,
    pub s_base_override: Option<f64>,
}

/// Records plus the non-fatal problems found while reading them.
#[derive(Debug, Clone, Default)]
pub struct ParsedCase {
    pub records: Vec<BranchRecord>,
    pub warnings: Vec<String>,
}

impl CaseSource {
    pub fn new(path: impl Into<std::path::PathBuf>) -> Self {
        let path = path.into();
        CaseSource {
            format: CaseFormat::from_path(&path),
            path,
            s_base_override: None,
        }
    }

    pub fn read_text(&self) -> Result<String> {
        std::fs::read_to_string(&self.path).map_err(|e| Error::io(&self.path, e))
    }

    pub fn load(&self) -> Result<ParsedCase> {
        let text = self.read_text()?;
        match self.format {
            CaseFormat::MatpowerSubset => parse_matpower_subset(&text, self.s_base_override),
            CaseFormat::BranchCsv => parse_branch_csv(&text),
        }
    }
}

/// Haversine distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn great_circle_km(p1: GeoPoint, p2: GeoPoint) -> Result<f64> {
    p1.validate()?;
    p2.validate()?;
    let (lat1, lat2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (p2.lon - p1.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // clamp guards asin against h creeping past 1 for antipodal points
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// Fills `length_km` of lines that lack it but carry endpoint coordinates.
/// Filled records are flagged with `length_estimated`.
pub fn fill_line_lengths(records: Vec<BranchRecord>) -> Vec<BranchRecord> {
    records
        .into_iter()
        .map(|mut rec| {
            if rec.kind == BranchKind::Line && rec.length_km.is_none() {
                if let Some((a, b)) = rec.endpoints_geo {
                    if let Ok(d) = great_circle_km(a, b) {
                        if d > 0.0 {
                            rec.length_km = Some(d);
                            rec.length_estimated = true;
                        }
                    }
                }
            }
            rec
        })
        .collect()
}

// ---------------------------------------------------------------------------
// MATPOWER subset
// ---------------------------------------------------------------------------

// bus columns
const BUS_I: usize = 0;
const BASE_KV: usize = 9;
// branch columns
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const TAP: usize = 8;
const BR_STATUS: usize = 10;

#[derive(Debug, Clone)]
struct Token {
    start: usize,
    end: usize,
    text: String,
}

#[derive(Debug, Clone)]
struct MatrixRow {
    line: usize,
    tokens: Vec<Token>,
}

impl MatrixRow {
    fn number(&self, col: usize, what: &str) -> Result<f64> {
        let tok = self.tokens.get(col).ok_or_else(|| Error::Parse {
            line: self.line,
            message: format!("{what} row has {} columns, need column {}", self.tokens.len(), col + 1),
        })?;
        tok.text.parse::<f64>().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("{what} column {}: `{}` is not a number", col + 1, tok.text),
        })
    }

    fn optional_number(&self, col: usize, what: &str) -> Result<Option<f64>> {
        if col < self.tokens.len() {
            self.number(col, what).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Scans `name = [ ... ];` matrices and `name = value;` scalars.
#[derive(Debug, Default)]
struct MatpowerScan {
    scalars: BTreeMap<String, (usize, String)>,
    matrices: BTreeMap<String, Vec<MatrixRow>>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn field_name(lhs: &str) -> String {
    let lhs = lhs.trim();
    lhs.strip_prefix("mpc.").unwrap_or(lhs).trim().to_string()
}

fn scan_matpower(text: &str) -> Result<MatpowerScan> {
    let mut scan = MatpowerScan::default();
    let mut open: Option<(String, usize)> = None;
    let mut offset = 0usize;

    for (idx, raw_line) in text.split_inclusive('\n').enumerate() {
        let line_no = idx + 1;
        let line_start = offset;
        offset += raw_line.len();
        let line = strip_comment(raw_line.trim_end_matches(['\n', '\r']));

        let (body, body_start) = match &open {
            Some(_) => (line, line_start),
            None => {
                let Some(eq) = line.find('=') else { continue };
                let name = field_name(&line[..eq]);
                let rhs = &line[eq + 1..];
                match rhs.find('[') {
                    Some(br) => {
                        scan.matrices.entry(name.clone()).or_default();
                        open = Some((name, line_no));
                        let start = eq + 1 + br + 1;
                        (&line[start..], line_start + start)
                    }
                    None => {
                        let value = rhs.trim().trim_end_matches(';').trim().to_string();
                        scan.scalars.insert(name, (line_no, value));
                        continue;
                    }
                }
            }
        };

        let (content, closes) = match body.find(']') {
            Some(i) => (&body[..i], true),
            None => (body, false),
        };
        let name = open.as_ref().map(|(n, _)| n.clone()).unwrap_or_default();
        let rows = scan.matrices.entry(name).or_default();

        let mut row_start = 0usize;
        for segment in content.split(';') {
            let seg_offset = body_start + row_start;
            row_start += segment.len() + 1;
            let mut tokens = Vec::new();
            let mut pos = 0usize;
            for piece in segment.split(|c: char| c.is_whitespace() || c == ',') {
                let start = seg_offset + pos;
                pos += piece.len() + 1;
                if !piece.is_empty() {
                    tokens.push(Token {
                        start,
                        end: start + piece.len(),
                        text: piece.to_string(),
                    });
                }
            }
            if !tokens.is_empty() {
                rows.push(MatrixRow { line: line_no, tokens });
            }
        }
        if closes {
            open = None;
        }
    }
    if let Some((name, line)) = open {
        return Err(Error::Parse {
            line,
            message: format!("matrix `{name}` is never closed"),
        });
    }
    Ok(scan)
}

/// Parses the `baseMVA`, `bus` and `branch` tables of a MATPOWER case.
///
/// Branch ids are the 1-based row numbers of the branch table. A branch is
/// a transformer when its tap ratio is non-zero or its endpoint base
/// voltages differ by more than the default classification tolerance.
pub fn parse_matpower_subset(text: &str, s_base_override: Option<f64>) -> Result<ParsedCase> {
    let scan = scan_matpower(text)?;

    let base_mva = match s_base_override {
        Some(s) => s,
        None => {
            let (line, value) = scan.scalars.get("baseMVA").ok_or_else(|| Error::Parse {
                line: 0,
                message: "missing `baseMVA`".into(),
            })?;
            value.parse::<f64>().map_err(|_| Error::Parse {
                line: *line,
                message: format!("baseMVA `{value}` is not a number"),
            })?
        }
    };
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(Error::invalid(format!("baseMVA must be positive, got {base_mva}")));
    }

    let bus_rows = scan.matrices.get("bus").ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing `bus` table".into(),
    })?;
    let branch_rows = scan.matrices.get("branch").ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing `branch` table".into(),
    })?;

    let mut bus_kv: BTreeMap<i64, f64> = BTreeMap::new();
    for row in bus_rows {
        let id = row.number(BUS_I, "bus")?;
        let kv = row.number(BASE_KV, "bus")?;
        bus_kv.insert(id as i64, kv);
    }

    let mut parsed = ParsedCase::default();
    for (idx, row) in branch_rows.iter().enumerate() {
        let id = (idx + 1).to_string();
        let fbus = row.number(F_BUS, "branch")? as i64;
        let tbus = row.number(T_BUS, "branch")? as i64;
        let r = row.number(BR_R, "branch")?;
        let x = row.number(BR_X, "branch")?;
        let rate_a = row.number(RATE_A, "branch")?;
        let tap = row.optional_number(TAP, "branch")?.unwrap_or(0.0);
        let status = row.optional_number(BR_STATUS, "branch")?.unwrap_or(1.0);

        let lookup = |bus: i64| {
            bus_kv.get(&bus).copied().ok_or_else(|| Error::Parse {
                line: row.line,
                message: format!("branch {id} references unknown bus {bus}"),
            })
        };
        let (kv_f, kv_t) = (lookup(fbus)?, lookup(tbus)?);

        if status == 0.0 {
            parsed
                .warnings
                .push(format!("line {}: branch {id} is out of service, dropped", row.line));
            continue;
        }
        if kv_f <= 0.0 || kv_t <= 0.0 {
            parsed.warnings.push(format!(
                "line {}: branch {id} has an endpoint with non-positive baseKV, skipped",
                row.line
            ));
            continue;
        }

        let kv_high = kv_f.max(kv_t);
        let kv_low = kv_f.min(kv_t);
        let differs = (kv_high - kv_low) / kv_high > DEFAULT_KV_TOLERANCE;
        let kind = if tap != 0.0 || differs {
            BranchKind::Transformer
        } else {
            BranchKind::Line
        };
        let record = BranchRecord {
            id: id.clone(),
            kind,
            from_bus: Some(fbus.to_string()),
            to_bus: Some(tbus.to_string()),
            x_pu: x,
            r_pu: r,
            system_base: BaseQuantities {
                v_base: kv_high,
                s_base: base_mva,
            },
            rating_mva: (rate_a > 0.0).then_some(rate_a),
            kv_high,
            kv_low: if kind == BranchKind::Line { kv_high } else { kv_low },
            length_km: None,
            length_estimated: false,
            endpoints_geo: None,
        };
        match record.validate() {
            Ok(()) => parsed.records.push(record),
            Err(e) => parsed
                .warnings
                .push(format!("line {}: branch {id} skipped: {e}", row.line)),
        }
    }
    Ok(parsed)
}

/// Rewrites the `r`, `x` and `rateA` cells of a MATPOWER case from
/// `records`, matched by branch row number. Every other byte of the input
/// is preserved.
pub fn rewrite_matpower(text: &str, records: &[BranchRecord]) -> Result<String> {
    let scan = scan_matpower(text)?;
    let rows = scan.matrices.get("branch").ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing `branch` table".into(),
    })?;
    let by_id: BTreeMap<&str, &BranchRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let id = (idx + 1).to_string();
        let Some(rec) = by_id.get(id.as_str()) else { continue };
        let mut set = |col: usize, value: f64| -> Result<()> {
            let tok = row.tokens.get(col).ok_or_else(|| Error::Parse {
                line: row.line,
                message: format!("branch row has no column {}", col + 1),
            })?;
            if tok.text.parse::<f64>().ok() != Some(value) {
                edits.push((tok.start, tok.end, format!("{value}")));
            }
            Ok(())
        };
        set(BR_R, rec.r_pu)?;
        set(BR_X, rec.x_pu)?;
        set(RATE_A, rec.rating_mva.unwrap_or(0.0))?;
    }
    edits.sort_by_key(|e| e.0);

    let mut out = String::with_capacity(text.len());
    let mut cursor = 0usize;
    for (start, end, replacement) in edits {
        out.push_str(&text[cursor..start]);
        out.push_str(&replacement);
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Branch CSV
// ---------------------------------------------------------------------------

fn cell<'a>(row: &'a csv::StringRecord, idx: Option<usize>) -> Option<&'a str> {
    idx.and_then(|i| row.get(i)).map(str::trim).filter(|s| !s.is_empty())
}

/// Parses the branch CSV format (see [`CSV_COLUMNS`]).
pub fn parse_branch_csv(text: &str) -> Result<ParsedCase> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    for name in CSV_MANDATORY {
        if column(name).is_none() {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let idx: BTreeMap<&str, Option<usize>> = CSV_COLUMNS.iter().map(|&c| (c, column(c))).collect();

    let mut parsed = ParsedCase::default();
    for result in reader.records() {
        let row = result.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        match csv_row_to_record(&row, &idx) {
            Ok(rec) => parsed.records.push(rec),
            Err(e) => parsed.warnings.push(format!("line {line}: row skipped: {e}")),
        }
    }
    Ok(parsed)
}

fn csv_row_to_record(
    row: &csv::StringRecord,
    idx: &BTreeMap<&str, Option<usize>>,
) -> Result<BranchRecord> {
    let text = |name: &str| cell(row, idx[name]);
    let number = |name: &str| -> Result<Option<f64>> {
        text(name)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("{name}: `{t}` is not a number")))
            })
            .transpose()
    };
    let required = |name: &str| -> Result<f64> {
        number(name)?.ok_or_else(|| Error::invalid(format!("{name} is empty")))
    };

    let id = text("id")
        .ok_or_else(|| Error::invalid("id is empty"))?
        .to_string();
    let kind: BranchKind = text("kind").unwrap_or("").parse()?;
    let kv_high = required("kv_high")?;
    let kv_low = required("kv_low")?;
    let geo = match (
        number("from_lat")?,
        number("from_lon")?,
        number("to_lat")?,
        number("to_lon")?,
    ) {
        (Some(a), Some(b), Some(c), Some(d)) => Some((GeoPoint::new(a, b)?, GeoPoint::new(c, d)?)),
        (None, None, None, None) => None,
        _ => return Err(Error::invalid("partial endpoint coordinates")),
    };
    let record = BranchRecord {
        id,
        kind,
        from_bus: text("from_bus").map(str::to_string),
        to_bus: text("to_bus").map(str::to_string),
        x_pu: required("x_pu")?,
        r_pu: required("r_pu")?,
        system_base: BaseQuantities {
            v_base: kv_high,
            s_base: required("s_base_mva")?,
        },
        rating_mva: number("rating_mva")?,
        kv_high,
        kv_low,
        length_km: number("length_km")?,
        length_estimated: false,
        endpoints_geo: geo,
    };
    record.validate()?;
    Ok(record)
}

/// Serializes records in the branch CSV format. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_branch_csv(records: &[BranchRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for rec in records {
        let (fl, fo, tl, to) = match rec.endpoints_geo {
            Some((a, b)) => (Some(a.lat), Some(a.lon), Some(b.lat), Some(b.lon)),
            None => (None, None, None, None),
        };
        let cells = [
            csv_escape(&rec.id),
            rec.kind.csv_token().to_string(),
            csv_escape(rec.from_bus.as_deref().unwrap_or("")),
            csv_escape(rec.to_bus.as_deref().unwrap_or("")),
            rec.kv_high.to_string(),
            rec.kv_low.to_string(),
            rec.x_pu.to_string(),
            rec.r_pu.to_string(),
            rec.system_base.s_base.to_string(),
            opt(rec.rating_mva),
            opt(rec.length_km),
            opt(fl),
            opt(fo),
            opt(tl),
            opt(to),
        ];
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s != s.trim() {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
