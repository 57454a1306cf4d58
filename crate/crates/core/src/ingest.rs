//! Loading episode metadata, scripts and saved episode-table pages from local
//! files, and merging them into one validated dataset.
//!
//! Every loader collects all defects it finds and reports them together in an
//! [`IngestErrors`] batch instead of stopping at the first one.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use regex::Regex;
use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numfmt::fmt_sig;

/// Column names of the metadata CSV, in canonical order.
pub const METADATA_COLUMNS: [&str; 8] = [
    "episode_id",
    "season",
    "episode",
    "title",
    "director",
    "viewers_millions",
    "imdb_rating",
    "review_count",
];

/// One episode's metadata plus its script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub season: u32,
    pub episode_number: u32,
    pub title: String,
    pub director_name: String,
    pub viewers_millions: f64,
    pub imdb_rating: f64,
    pub review_count: u64,
    #[serde(default)]
    pub script_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    MetadataCsv,
    Script,
    HtmlSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub path: String,
    pub kind: SourceKind,
    /// Hex SHA-256 of the file bytes.
    pub checksum: String,
}

impl SourceEntry {
    pub fn new(path: &Path, kind: SourceKind, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            kind,
            checksum: sha256_hex(bytes),
        }
    }
}

/// The merged episode table, ordered by (season, episode_number).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub records: Vec<EpisodeRecord>,
    pub source_manifest: Vec<SourceEntry>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    MalformedNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: value {value} out of range")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: episode id `{id}` does not match season/episode (expected `{expected}`)")]
    EpisodeIdMismatch {
        row: usize,
        id: String,
        expected: String,
    },
    #[error("duplicate episode id `{0}`")]
    DuplicateEpisodeId(String),
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("no table with `Directed by` and `viewers` header cells")]
    NoMatchingTable,
    #[error("episode table row {0} cannot be parsed")]
    UnparseableRow(usize),
    #[error("cannot read `{path}`: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("`{0}` resolves to an episode id that another file already claims")]
    AmbiguousEpisodeId(PathBuf),
    #[error("script `{0}` has no metadata row")]
    UnmatchedScript(String),
    #[error("episode `{0}` has no script")]
    MissingScript(String),
    #[error("script pattern `{0}` must contain both {{SS}} and {{EE}}")]
    InvalidPattern(String),
}

/// A batch of ingest defects, reported together.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct IngestErrors(pub Vec<IngestError>);

impl fmt::Display for IngestErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ingest error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl From<IngestError> for IngestErrors {
    fn from(e: IngestError) -> Self {
        IngestErrors(vec![e])
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The canonical `SxxEyy` key.
pub fn episode_id(season: u32, episode: u32) -> String {
    format!("S{season:02}E{episode:02}")
}

fn unreadable(path: &Path, e: impl fmt::Display) -> IngestError {
    IngestError::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn load_metadata_csv(path: &Path) -> Result<Vec<EpisodeRecord>, IngestErrors> {
    let file = fs::File::open(path).map_err(|e| unreadable(path, e))?;
    read_metadata_csv(file)
}

/// Parses metadata CSV text. Rows are numbered from 1 (the first data row).
pub fn read_metadata_csv<R: Read>(reader: R) -> Result<Vec<EpisodeRecord>, IngestErrors> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let mut col = HashMap::new();
    let mut errors = Vec::new();
    for name in METADATA_COLUMNS {
        match headers.iter().position(|h| h == name) {
            Some(i) => {
                col.insert(name, i);
            }
            None => errors.push(IngestError::MissingColumn(name.to_string())),
        }
    }
    if !errors.is_empty() {
        return Err(IngestErrors(errors));
    }

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(IngestError::MalformedRow {
                    row: row_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let field = |name: &str| row.get(col[name]).unwrap_or("").to_string();
        let before = errors.len();
        let season = parse_field::<u32>(&field("season"), row_no, "season", &mut errors);
        let episode = parse_field::<u32>(&field("episode"), row_no, "episode", &mut errors);
        let viewers =
            parse_field::<f64>(&field("viewers_millions"), row_no, "viewers_millions", &mut errors);
        let rating = parse_field::<f64>(&field("imdb_rating"), row_no, "imdb_rating", &mut errors);
        let reviews = parse_field::<u64>(&field("review_count"), row_no, "review_count", &mut errors);
        if let Some(v) = viewers.filter(|v| !(*v >= 0.0 && v.is_finite())) {
            errors.push(IngestError::OutOfRange {
                row: row_no,
                column: "viewers_millions".into(),
                value: v,
            });
        }
        if let Some(r) = rating.filter(|r| !(0.0..=10.0).contains(r)) {
            errors.push(IngestError::OutOfRange {
                row: row_no,
                column: "imdb_rating".into(),
                value: r,
            });
        }
        let id = field("episode_id");
        if let (Some(s), Some(e)) = (season, episode) {
            let expected = episode_id(s, e);
            if !id.eq_ignore_ascii_case(&expected) {
                errors.push(IngestError::EpisodeIdMismatch {
                    row: row_no,
                    id: id.clone(),
                    expected,
                });
            }
        }
        if errors.len() > before {
            continue;
        }
        let (season, episode) = (season.unwrap(), episode.unwrap());
        let id = episode_id(season, episode);
        if seen.insert(id.clone(), row_no).is_some() {
            errors.push(IngestError::DuplicateEpisodeId(id));
            continue;
        }
        records.push(EpisodeRecord {
            episode_id: id,
            season,
            episode_number: episode,
            title: field("title"),
            director_name: field("director"),
            viewers_millions: viewers.unwrap(),
            imdb_rating: rating.unwrap(),
            review_count: reviews.unwrap(),
            script_text: String::new(),
        });
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(IngestErrors(errors))
    }
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    row: usize,
    column: &str,
    errors: &mut Vec<IngestError>,
) -> Option<T> {
    match raw.parse::<T>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(IngestError::MalformedNumber {
                row,
                column: column.to_string(),
                value: raw.to_string(),
            });
            None
        }
    }
}

/// Writes records in the metadata CSV schema; reals at 6 significant digits.
pub fn write_metadata_csv<W: Write>(records: &[EpisodeRecord], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METADATA_COLUMNS)?;
    for r in records {
        w.write_record([
            r.episode_id.clone(),
            r.season.to_string(),
            r.episode_number.to_string(),
            r.title.clone(),
            r.director_name.clone(),
            fmt_sig(r.viewers_millions, 6),
            fmt_sig(r.imdb_rating, 6),
            r.review_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTableRow {
    pub title: String,
    pub director_name: String,
    pub viewers_millions: f64,
}

/// Rows recovered from an episode-table page. Rows that could not be parsed
/// are listed in `rejected` and do not stop the others.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTable {
    pub rows: Vec<EpisodeTableRow>,
    pub rejected: Vec<IngestError>,
}

fn footnote_re() -> Regex {
    Regex::new(r"\[[^\]]*\]").unwrap()
}

fn cell_text(cell: &ElementRef<'_>, footnotes: &Regex) -> String {
    let raw: String = cell.text().collect::<Vec<_>>().join(" ");
    let stripped = footnotes.replace_all(&raw, "");
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cells of a row with `colspan` expanded, so column positions line up with
/// the header.
fn expanded_cells<'a>(row: ElementRef<'a>, cells: &Selector) -> Vec<ElementRef<'a>> {
    let mut out = Vec::new();
    for cell in row.select(cells) {
        let span = cell
            .value()
            .attr("colspan")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .unwrap_or(1)
            .clamp(1, 64);
        for _ in 0..span {
            out.push(cell);
        }
    }
    out
}

fn parse_viewers(text: &str) -> Option<f64> {
    let v: f64 = text.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

/// Extracts (title, director, viewers) rows from every table whose header row
/// has cells containing "Directed by" and "viewers" (case-insensitive).
/// Bracketed footnote markers are stripped from every cell and surrounding
/// quotes from titles. Single-cell rows (episode summaries) are skipped.
pub fn parse_episode_table_html(html: &str) -> Result<EpisodeTable, IngestError> {
    let doc = Html::parse_document(html);
    let tables = Selector::parse("table").unwrap();
    let rows_sel = Selector::parse("tr").unwrap();
    let cells_sel = Selector::parse("th, td").unwrap();
    let td_sel = Selector::parse("td").unwrap();
    let footnotes = footnote_re();

    let mut found = false;
    let mut out = EpisodeTable {
        rows: Vec::new(),
        rejected: Vec::new(),
    };
    let mut data_index = 0;
    for table in doc.select(&tables) {
        // Only rows belonging to this table, not to nested tables.
        let rows: Vec<ElementRef<'_>> = table
            .select(&rows_sel)
            .filter(|r| r.ancestors().filter_map(ElementRef::wrap).find(|a| a.value().name() == "table") == Some(table))
            .collect();
        let Some(header_pos) = rows.iter().position(|r| r.select(&td_sel).next().is_none()) else {
            continue;
        };
        let header: Vec<String> = expanded_cells(rows[header_pos], &cells_sel)
            .iter()
            .map(|c| cell_text(c, &footnotes).to_lowercase())
            .collect();
        let director_col = header.iter().position(|h| h.contains("directed by"));
        let viewers_col = header.iter().position(|h| h.contains("viewers"));
        let (Some(director_col), Some(viewers_col)) = (director_col, viewers_col) else {
            continue;
        };
        let title_col = header.iter().position(|h| h.contains("title"));
        found = true;

        for row in &rows[header_pos + 1..] {
            if row.select(&td_sel).next().is_none() {
                continue;
            }
            let cells = expanded_cells(*row, &cells_sel);
            if row.select(&cells_sel).count() == 1 {
                continue;
            }
            let index = data_index;
            data_index += 1;
            let text = |i: usize| cells.get(i).map(|c| cell_text(c, &footnotes));
            let title = match title_col {
                Some(c) => text(c),
                None => Some(String::new()),
            };
            let parsed = match (title, text(director_col), text(viewers_col)) {
                (Some(title), Some(director), Some(viewers)) => {
                    parse_viewers(&viewers).map(|v| EpisodeTableRow {
                        title: title.trim_matches(|c| matches!(c, '"' | '\u{201c}' | '\u{201d}')).to_string(),
                        director_name: director,
                        viewers_millions: v,
                    })
                }
                _ => None,
            };
            match parsed {
                Some(r) => out.rows.push(r),
                None => out.rejected.push(IngestError::UnparseableRow(index)),
            }
        }
    }
    if found {
        Ok(out)
    } else {
        Err(IngestError::NoMatchingTable)
    }
}

/// Season number encoded in a snapshot file name: the first run of digits.
pub fn season_from_filename(path: &Path) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    let re = Regex::new(r"\d+").unwrap();
    re.find(name)?.as_str().parse().ok()
}

/// Overlays director names and viewer figures from one season's table onto
/// the metadata: table row `i` is episode `i + 1` of `season`. Returns a
/// warning for each table row without a metadata record.
pub fn apply_episode_table(
    records: &mut [EpisodeRecord],
    season: u32,
    table: &EpisodeTable,
) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let id = episode_id(season, i as u32 + 1);
        match records.iter_mut().find(|r| r.episode_id == id) {
            Some(rec) => {
                rec.director_name = row.director_name.clone();
                rec.viewers_millions = row.viewers_millions;
            }
            None => warnings.push(format!("table row for {id} (`{}`) has no metadata record", row.title)),
        }
    }
    warnings
}

/// How script bytes are decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextDecoding {
    /// Invalid UTF-8 is an error.
    #[default]
    Strict,
    /// Invalid sequences become U+FFFD.
    Replace,
}

/// Script file-name pattern with `{SS}` (season) and `{EE}` (episode)
/// placeholders, matched case-insensitively against whole file names.
#[derive(Debug, Clone)]
pub struct ScriptNaming {
    pattern: String,
    re: Regex,
    season_first: bool,
}

impl ScriptNaming {
    pub fn new(pattern: &str) -> Result<Self, IngestError> {
        let (Some(s), Some(e)) = (pattern.find("{SS}"), pattern.find("{EE}")) else {
            return Err(IngestError::InvalidPattern(pattern.to_string()));
        };
        let escaped = regex::escape(pattern)
            .replace(r"\{SS\}", r"(\d+)")
            .replace(r"\{EE\}", r"(\d+)");
        let re = Regex::new(&format!("(?i)^{escaped}$"))
            .map_err(|_| IngestError::InvalidPattern(pattern.to_string()))?;
        Ok(Self {
            pattern: pattern.to_string(),
            re,
            season_first: s < e,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    /// The episode id a file name encodes, if it matches the pattern.
    pub fn episode_id_for(&self, file_name: &str) -> Option<String> {
        let caps = self.re.captures(file_name)?;
        let a: u32 = caps.get(1)?.as_str().parse().ok()?;
        let b: u32 = caps.get(2)?.as_str().parse().ok()?;
        let (season, episode) = if self.season_first { (a, b) } else { (b, a) };
        Some(episode_id(season, episode))
    }
}

impl Default for ScriptNaming {
    fn default() -> Self {
        Self::new("s{SS}e{EE}.txt").unwrap()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptSet {
    pub texts: BTreeMap<String, String>,
    pub sources: Vec<SourceEntry>,
}

/// Reads every file in `dir` whose name matches `naming`. Other files are
/// ignored.
pub fn load_scripts(
    dir: &Path,
    naming: &ScriptNaming,
    decoding: TextDecoding,
) -> Result<ScriptSet, IngestErrors> {
    let entries = fs::read_dir(dir).map_err(|e| unreadable(dir, e))?;
    let mut candidates: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| unreadable(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = naming.episode_id_for(name) {
            candidates.push((id, path));
        }
    }
    candidates.sort_by(|a, b| a.1.cmp(&b.1));

    let mut errors = Vec::new();
    let mut claimed: BTreeMap<&str, &Path> = BTreeMap::new();
    for (id, path) in &candidates {
        if let Some(first) = claimed.insert(id, path) {
            errors.push(IngestError::AmbiguousEpisodeId(first.to_path_buf()));
            errors.push(IngestError::AmbiguousEpisodeId(path.clone()));
        }
    }
    errors.dedup();

    let read: Vec<Result<(String, String, SourceEntry), IngestError>> = candidates
        .par_iter()
        .map(|(id, path)| {
            let bytes = fs::read(path).map_err(|e| unreadable(path, e))?;
            let text = match decoding {
                TextDecoding::Strict => String::from_utf8(bytes.clone())
                    .map_err(|e| unreadable(path, format!("invalid UTF-8: {e}")))?,
                TextDecoding::Replace => String::from_utf8_lossy(&bytes).into_owned(),
            };
            Ok((id.clone(), text, SourceEntry::new(path, SourceKind::Script, &bytes)))
        })
        .collect();

    let mut set = ScriptSet::default();
    for r in read {
        match r {
            Ok((id, text, src)) => {
                set.texts.insert(id, text);
                set.sources.push(src);
            }
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(set)
    } else {
        Err(IngestErrors(errors))
    }
}

/// Attaches scripts to metadata by episode id and sorts by (season, episode).
/// Metadata without a (non-blank) script and scripts without metadata are all
/// reported.
pub fn merge_dataset(
    metadata: Vec<EpisodeRecord>,
    scripts: &BTreeMap<String, String>,
) -> Result<RawDataset, IngestErrors> {
    let mut errors = Vec::new();
    let mut records = Vec::with_capacity(metadata.len());
    for mut rec in metadata {
        match scripts.get(&rec.episode_id) {
            Some(text) if !text.trim().is_empty() => {
                rec.script_text = text.clone();
                records.push(rec);
            }
            _ => errors.push(IngestError::MissingScript(rec.episode_id.clone())),
        }
    }
    for id in scripts.keys() {
        if !records.iter().any(|r| &r.episode_id == id)
            && !errors.contains(&IngestError::MissingScript(id.clone()))
        {
            errors.push(IngestError::UnmatchedScript(id.clone()));
        }
    }
    if !errors.is_empty() {
        return Err(IngestErrors(errors));
    }
    records.sort_by_key(|r| (r.season, r.episode_number));
    Ok(RawDataset {
        records,
        source_manifest: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "episode_id,season,episode,title,director,viewers_millions,imdb_rating,review_count\n";

    fn rec(id: &str, s: u32, e: u32) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: id.into(),
            season: s,
            episode_number: e,
            title: format!("t{e}"),
            director_name: "D".into(),
            viewers_millions: 1.0,
            imdb_rating: 8.0,
            review_count: 10,
            script_text: String::new(),
        }
    }

    #[test]
    fn parses_a_metadata_row() {
        let csv = format!("{HEADER}S01E01,1,1,Pilot,David Nutter,4.14,8.6,1200\n");
        let recs = read_metadata_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].viewers_millions, 4.14);
        assert_eq!(recs[0].imdb_rating, 8.6);
        assert_eq!(recs[0].review_count, 1200);
        assert_eq!(recs[0].director_name, "David Nutter");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_metadata_csv(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_number_names_row_and_column() {
        let csv = format!(
            "{HEADER}S01E01,1,1,Pilot,D,abc,8.6,1200\nS01E02,1,2,Honor Thy Father,D,x,8.1,y\n"
        );
        let err = read_metadata_csv(csv.as_bytes()).unwrap_err();
        assert_eq!(
            err.0[0],
            IngestError::MalformedNumber {
                row: 1,
                column: "viewers_millions".into(),
                value: "abc".into()
            }
        );
        // both bad rows are reported in one pass
        assert_eq!(err.0.len(), 3);
    }

    #[test]
    fn missing_columns_are_all_listed() {
        let err = read_metadata_csv("episode_id,season,episode,title\n".as_bytes()).unwrap_err();
        let missing: Vec<_> = err
            .0
            .iter()
            .map(|e| match e {
                IngestError::MissingColumn(c) => c.as_str(),
                _ => panic!("{e}"),
            })
            .collect();
        assert_eq!(missing, ["director", "viewers_millions", "imdb_rating", "review_count"]);
    }

    #[test]
    fn duplicate_and_out_of_range() {
        let csv = format!(
            "{HEADER}S01E01,1,1,A,D,1,8,1\nS01E01,1,1,B,D,1,8,1\nS01E02,1,2,C,D,1,11,1\n"
        );
        let err = read_metadata_csv(csv.as_bytes()).unwrap_err();
        assert!(err.0.contains(&IngestError::DuplicateEpisodeId("S01E01".into())));
        assert!(matches!(err.0.last(), Some(IngestError::OutOfRange { row: 3, .. })));
    }

    #[test]
    fn metadata_round_trip() {
        let mut a = rec("S01E01", 1, 1);
        a.viewers_millions = 4.14;
        a.title = "Pilot, part \"one\"".into();
        let mut buf = Vec::new();
        write_metadata_csv(&[a.clone()], &mut buf).unwrap();
        assert_eq!(read_metadata_csv(buf.as_slice()).unwrap(), vec![a]);
    }

    const TABLE: &str = r#"<html><body>
      <table class="wikitable"><tr><th>No.</th><th>Title</th><th>Directed by</th>
        <th>U.S. viewers<br/>(millions)</th></tr>
      <tr><th scope="row">1</th><td>"Pilot"</td><td>David Nutter</td><td>4.14<sup>[8]</sup></td></tr>
      <tr><td colspan="4">Oliver returns home.</td></tr>
      <tr><th>2</th><td>"Honor Thy Father"</td><td>Guy Bee</td><td>N/A</td></tr>
      <tr><th>3</th><td>"Lone Gunmen"</td><td>Guy Bee</td><td>3.55[10]</td></tr>
      </table></body></html>"#;

    #[test]
    fn parses_episode_table() {
        let t = parse_episode_table_html(TABLE).unwrap();
        assert_eq!(
            t.rows[0],
            EpisodeTableRow {
                title: "Pilot".into(),
                director_name: "David Nutter".into(),
                viewers_millions: 4.14
            }
        );
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].viewers_millions, 3.55);
        assert_eq!(t.rejected, vec![IngestError::UnparseableRow(1)]);
    }

    #[test]
    fn no_table_is_an_error() {
        assert_eq!(
            parse_episode_table_html("<p>nothing</p>").unwrap_err(),
            IngestError::NoMatchingTable
        );
        let other = "<table><tr><th>Season</th><th>Episodes</th></tr><tr><td>1</td><td>23</td></tr></table>";
        assert_eq!(parse_episode_table_html(other).unwrap_err(), IngestError::NoMatchingTable);
    }

    #[test]
    fn naming_pattern() {
        let n = ScriptNaming::default();
        assert_eq!(n.episode_id_for("s01e02.txt").as_deref(), Some("S01E02"));
        assert_eq!(n.episode_id_for("S1E2.TXT").as_deref(), Some("S01E02"));
        assert_eq!(n.episode_id_for("notes.txt"), None);
        let swapped = ScriptNaming::new("ep{EE}_season{SS}.txt").unwrap();
        assert_eq!(swapped.episode_id_for("ep03_season2.txt").as_deref(), Some("S02E03"));
        assert!(ScriptNaming::new("{SS}.txt").is_err());
    }

    #[test]
    fn load_scripts_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        let n = ScriptNaming::default();
        assert!(load_scripts(dir.path(), &n, TextDecoding::Strict).unwrap().texts.is_empty());
        fs::write(dir.path().join("s01e01.txt"), "one").unwrap();
        fs::write(dir.path().join("s01e02.txt"), "two").unwrap();
        fs::write(dir.path().join("readme.md"), "x").unwrap();
        let set = load_scripts(dir.path(), &n, TextDecoding::Strict).unwrap();
        assert_eq!(set.texts.len(), 2);
        assert_eq!(set.texts["S01E02"], "two");
        assert_eq!(set.sources.len(), 2);

        fs::write(dir.path().join("s1e1.txt"), "dup").unwrap();
        let err = load_scripts(dir.path(), &n, TextDecoding::Strict).unwrap_err();
        assert!(err.0.iter().all(|e| matches!(e, IngestError::AmbiguousEpisodeId(_))));
    }

    #[test]
    fn invalid_utf8_strict_vs_replace() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("s01e01.txt"), b"ok \xff bad").unwrap();
        let n = ScriptNaming::default();
        let err = load_scripts(dir.path(), &n, TextDecoding::Strict).unwrap_err();
        assert!(matches!(err.0[0], IngestError::UnreadableFile { .. }));
        let set = load_scripts(dir.path(), &n, TextDecoding::Replace).unwrap();
        assert_eq!(set.texts["S01E01"], "ok \u{fffd} bad");
    }

    #[test]
    fn merge_sorts_and_fills() {
        let meta = vec![rec("S01E02", 1, 2), rec("S01E01", 1, 1)];
        let scripts: BTreeMap<_, _> =
            [("S01E01".to_string(), "a".to_string()), ("S01E02".to_string(), "b".to_string())].into();
        let ds = merge_dataset(meta, &scripts).unwrap();
        assert_eq!(ds.records[0].episode_id, "S01E01");
        assert_eq!(ds.records[1].script_text, "b");
        let again = merge_dataset(ds.records.clone(), &scripts).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn merge_reports_both_sides() {
        let scripts: BTreeMap<_, _> = [("S09E99".to_string(), "x".to_string())].into();
        let err = merge_dataset(vec![rec("S01E01", 1, 1)], &scripts).unwrap_err();
        assert_eq!(
            err.0,
            vec![
                IngestError::MissingScript("S01E01".into()),
                IngestError::UnmatchedScript("S09E99".into())
            ]
        );
    }

    #[test]
    fn table_overlay() {
        let mut recs = vec![rec("S01E01", 1, 1)];
        let t = parse_episode_table_html(TABLE).unwrap();
        let warnings = apply_episode_table(&mut recs, 1, &t);
        assert_eq!(recs[0].director_name, "David Nutter");
        assert_eq!(recs[0].viewers_millions, 4.14);
        assert_eq!(warnings.len(), 1);
        assert_eq!(season_from_filename(Path::new("html/season_3.html")), Some(3));
    }
}
