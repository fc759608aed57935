//! Dataset ingestion: app metadata, ratings, cold-start filtering, and the
//! sparse rating matrix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five admissible rating grades (1..=5 stars mapped to s/5).
pub const RATING_GRADES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Columns of `apps.csv`, in order.
pub const APPS_HEADER: [&str; 12] = [
    "app_id",
    "category",
    "provider",
    "content_rating",
    "has_ads",
    "is_free",
    "interactive_elements",
    "avg_rating",
    "install_count",
    "updated_date",
    "size_bytes",
    "readme_text",
];

/// Columns of `ratings.csv`, in order.
pub const RATINGS_HEADER: [&str; 3] = ["user_id", "app_id", "rating"];

/// App size: a byte count, or the store's "varies with device" marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeSpec {
    Bytes(u64),
    Varies,
}

/// One catalogue entry with all side information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub category: String,
    pub provider: String,
    pub content_rating: String,
    pub has_ads: bool,
    pub is_free: bool,
    /// Distinct element labels, sorted.
    pub interactive_elements: Vec<String>,
    pub avg_rating: f64,
    pub install_count: u64,
    pub updated_date: NaiveDate,
    pub size: SizeSpec,
    pub readme_text: String,
}

/// One user-app rating in grade form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: String,
    pub app_id: String,
    pub rating: f64,
}

/// A non-fatal row rejection recorded during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipNote {
    /// 1-based line in the source file, counting the header line.
    pub line: u64,
    pub message: String,
}

/// Result of [`load_dataset`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub apps: Vec<AppRecord>,
    pub ratings: Vec<RatingRecord>,
    /// Rows dropped by policy (unknown app references, superseded duplicates).
    pub skipped: Vec<SkipNote>,
}

/// Maps a star count (1..=5) to its grade.
pub fn grade_from_stars(stars: u8) -> Option<f64> {
    (1..=5).contains(&stars).then(|| f64::from(stars) / 5.0)
}

/// Whether `x` is exactly one of the five grades.
pub fn is_valid_grade(x: f64) -> bool {
    RATING_GRADES.contains(&x)
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(Error::MalformedFile {
            file: path_str(path),
            message: format!("header is {:?}, expected {:?}", got, want),
        });
    }
    Ok(())
}

fn field<'r>(
    path: &Path,
    record: &'r csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<&'r str> {
    record.get(idx).ok_or_else(|| {
        Error::ingest(
            path_str(path),
            record_line(record),
            name,
            "missing field".to_string(),
        )
    })
}

fn parse_app_row(path: &Path, record: &csv::StringRecord) -> Result<AppRecord> {
    let line = record_line(record);
    let file = path_str(path);
    let err = |f: &str, m: String| Error::ingest(file.clone(), line, f, m);

    let app_id = field(path, record, 0, "app_id")?.to_string();
    if app_id.is_empty() {
        return Err(err("app_id", "must be nonempty".into()));
    }
    let category = field(path, record, 1, "category")?.to_string();
    let provider = field(path, record, 2, "provider")?.to_string();
    let content_rating = field(path, record, 3, "content_rating")?.to_string();

    let parse_bool = |f: &str, v: &str| match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(f, format!("`{other}` is not a boolean (true/false)"))),
    };
    let has_ads = parse_bool("has_ads", field(path, record, 4, "has_ads")?)?;
    let is_free = parse_bool("is_free", field(path, record, 5, "is_free")?)?;

    let mut interactive_elements: Vec<String> = field(path, record, 6, "interactive_elements")?
        .split(';')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    interactive_elements.sort();
    interactive_elements.dedup();

    let avg_raw = field(path, record, 7, "avg_rating")?;
    let avg_rating: f64 = avg_raw
        .parse()
        .map_err(|_| err("avg_rating", format!("`{avg_raw}` is not a number")))?;
    if !(0.0..=5.0).contains(&avg_rating) {
        return Err(err("avg_rating", format!("{avg_rating} outside [0,5]")));
    }

    let install_raw = field(path, record, 8, "install_count")?;
    let install_count: u64 = install_raw.parse().map_err(|_| {
        err(
            "install_count",
            format!("`{install_raw}` is not a non-negative integer"),
        )
    })?;

    let date_raw = field(path, record, 9, "updated_date")?;
    let updated_date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
        .map_err(|_| err("updated_date", format!("`{date_raw}` is not an ISO date")))?;

    let size_raw = field(path, record, 10, "size_bytes")?;
    let size = if size_raw == "VARIES" {
        SizeSpec::Varies
    } else {
        SizeSpec::Bytes(size_raw.parse().map_err(|_| {
            err(
                "size_bytes",
                format!("`{size_raw}` is neither an integer nor VARIES"),
            )
        })?)
    };

    let readme_text = field(path, record, 11, "readme_text")?.to_string();

    Ok(AppRecord {
        app_id,
        category,
        provider,
        content_rating,
        has_ads,
        is_free,
        interactive_elements,
        avg_rating,
        install_count,
        updated_date,
        size,
        readme_text,
    })
}

/// Reads and validates `apps.csv` + `ratings.csv`.
///
/// Fatal: malformed fields, duplicate app ids, grades outside the five
/// values. Non-fatal (skip report): ratings naming an unknown app, and
/// duplicate (user, app) pairs, where the last occurrence wins.
pub fn load_dataset(apps_path: &Path, ratings_path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(apps_path)?;
    check_header(apps_path, reader.headers()?, &APPS_HEADER)?;

    let mut apps = Vec::new();
    let mut seen_apps = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let app = parse_app_row(apps_path, &record)?;
        if !seen_apps.insert(app.app_id.clone()) {
            return Err(Error::ingest(
                path_str(apps_path),
                record_line(&record),
                "app_id",
                format!("duplicate app id `{}`", app.app_id),
            ));
        }
        apps.push(app);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(ratings_path)?;
    check_header(ratings_path, reader.headers()?, &RATINGS_HEADER)?;

    let mut ratings: Vec<RatingRecord> = Vec::new();
    let mut by_pair: HashMap<(String, String), usize> = HashMap::new();
    let mut skipped = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let user_id = field(ratings_path, &record, 0, "user_id")?.to_string();
        if user_id.is_empty() {
            return Err(Error::ingest(
                path_str(ratings_path),
                line,
                "user_id",
                "must be nonempty".to_string(),
            ));
        }
        let app_id = field(ratings_path, &record, 1, "app_id")?.to_string();
        let rating_raw = field(ratings_path, &record, 2, "rating")?;
        let rating: f64 = rating_raw.parse().map_err(|_| {
            Error::ingest(
                path_str(ratings_path),
                line,
                "rating",
                format!("`{rating_raw}` is not a number"),
            )
        })?;
        if !is_valid_grade(rating) {
            return Err(Error::ingest(
                path_str(ratings_path),
                line,
                "rating",
                format!("{rating} is not one of the five grades 0.2..1.0"),
            ));
        }
        if !seen_apps.contains(&app_id) {
            skipped.push(SkipNote {
                line,
                message: format!("rating references unknown app `{app_id}`"),
            });
            continue;
        }
        match by_pair.entry((user_id.clone(), app_id.clone())) {
            std::collections::hash_map::Entry::Occupied(slot) => {
                skipped.push(SkipNote {
                    line,
                    message: format!("duplicate rating for ({user_id}, {app_id}); keeping last"),
                });
                ratings[*slot.get()].rating = rating;
            }
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(ratings.len());
                ratings.push(RatingRecord {
                    user_id,
                    app_id,
                    rating,
                });
            }
        }
    }

    Ok(Dataset {
        apps,
        ratings,
        skipped,
    })
}

/// Writes records back in the ingest format; `load_dataset` on the output
/// reproduces the records exactly.
pub fn write_dataset(
    apps_path: &Path,
    ratings_path: &Path,
    apps: &[AppRecord],
    ratings: &[RatingRecord],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(apps_path)?;
    writer.write_record(APPS_HEADER)?;
    for app in apps {
        let size = match app.size {
            SizeSpec::Bytes(b) => b.to_string(),
            SizeSpec::Varies => "VARIES".to_string(),
        };
        writer.write_record([
            app.app_id.as_str(),
            app.category.as_str(),
            app.provider.as_str(),
            app.content_rating.as_str(),
            if app.has_ads { "true" } else { "false" },
            if app.is_free { "true" } else { "false" },
            &app.interactive_elements.join(";"),
            &app.avg_rating.to_string(),
            &app.install_count.to_string(),
            &app.updated_date.format("%Y-%m-%d").to_string(),
            &size,
            app.readme_text.as_str(),
        ])?;
    }
    writer.flush()?;

    let mut writer = csv::Writer::from_path(ratings_path)?;
    writer.write_record(RATINGS_HEADER)?;
    for r in ratings {
        writer.write_record([r.user_id.as_str(), r.app_id.as_str(), &r.rating.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Outcome of [`filter_cold_start`].
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub apps: Vec<AppRecord>,
    pub ratings: Vec<RatingRecord>,
    pub removed_apps: Vec<String>,
    pub removed_users: Vec<String>,
    /// Whether repeating the two passes on the output would remove more.
    /// The filter intentionally does NOT iterate to a fixpoint.
    pub second_pass_would_change: bool,
}

fn cold_start_passes(
    apps: &[AppRecord],
    ratings: &[RatingRecord],
    min_user: usize,
    min_app: usize,
) -> (Vec<String>, Vec<String>) {
    let mut raters_per_app: HashMap<&str, usize> = HashMap::new();
    for r in ratings {
        *raters_per_app.entry(r.app_id.as_str()).or_default() += 1;
    }
    let mut removed_apps: Vec<String> = apps
        .iter()
        .filter(|a| raters_per_app.get(a.app_id.as_str()).copied().unwrap_or(0) < min_app)
        .map(|a| a.app_id.clone())
        .collect();
    removed_apps.sort();
    let dropped: HashSet<&str> = removed_apps.iter().map(String::as_str).collect();

    let mut apps_per_user: BTreeMap<&str, usize> = BTreeMap::new();
    for r in ratings {
        if !dropped.contains(r.app_id.as_str()) {
            *apps_per_user.entry(r.user_id.as_str()).or_default() += 1;
        }
    }
    // A user all of whose apps were dropped has count 0 and must go too.
    for r in ratings {
        apps_per_user.entry(r.user_id.as_str()).or_insert(0);
    }
    let removed_users: Vec<String> = apps_per_user
        .iter()
        .filter(|(_, &n)| n < min_user)
        .map(|(u, _)| (*u).to_string())
        .collect();
    (removed_apps, removed_users)
}

/// Two-pass cold-start filter: drop apps with fewer than `min_app` raters,
/// then drop users left with fewer than `min_user` rated apps. Exactly two
/// passes, apps-then-users; no fixpoint iteration.
///
/// Requires deduplicated ratings (one row per (user, app) pair), as
/// produced by [`load_dataset`].
pub fn filter_cold_start(
    apps: &[AppRecord],
    ratings: &[RatingRecord],
    min_user: usize,
    min_app: usize,
) -> Result<FilterResult> {
    if min_user == 0 || min_app == 0 {
        return Err(Error::InvalidParameter(
            "cold-start thresholds must be at least 1".to_string(),
        ));
    }
    let (removed_apps, removed_users) = cold_start_passes(apps, ratings, min_user, min_app);
    let dropped_apps: HashSet<&str> = removed_apps.iter().map(String::as_str).collect();
    let dropped_users: HashSet<&str> = removed_users.iter().map(String::as_str).collect();

    let apps_out: Vec<AppRecord> = apps
        .iter()
        .filter(|a| !dropped_apps.contains(a.app_id.as_str()))
        .cloned()
        .collect();
    let ratings_out: Vec<RatingRecord> = ratings
        .iter()
        .filter(|r| {
            !dropped_apps.contains(r.app_id.as_str()) && !dropped_users.contains(r.user_id.as_str())
        })
        .cloned()
        .collect();
    if apps_out.is_empty() || ratings_out.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }

    let (again_apps, again_users) = cold_start_passes(&apps_out, &ratings_out, min_user, min_app);
    Ok(FilterResult {
        apps: apps_out,
        ratings: ratings_out,
        removed_apps,
        removed_users,
        second_pass_would_change: !(again_apps.is_empty() && again_users.is_empty()),
    })
}

/// Sparse user × app rating matrix with lexicographic id ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    users: Vec<String>,
    apps: Vec<String>,
    /// Per user, (app index, grade) sorted by app index.
    rows: Vec<Vec<(u32, f64)>>,
}

impl RatingMatrix {
    /// Builds the matrix; users and apps are the sorted distinct ids seen
    /// in `ratings`.
    pub fn build(ratings: &[RatingRecord]) -> Result<RatingMatrix> {
        let mut users: Vec<&str> = ratings.iter().map(|r| r.user_id.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        let mut apps: Vec<&str> = ratings.iter().map(|r| r.app_id.as_str()).collect();
        apps.sort_unstable();
        apps.dedup();
        let user_idx: HashMap<&str, usize> =
            users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let app_idx: HashMap<&str, usize> = apps.iter().enumerate().map(|(i, &a)| (a, i)).collect();

        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); users.len()];
        for r in ratings {
            if !is_valid_grade(r.rating) {
                return Err(Error::InvalidParameter(format!(
                    "rating {} for ({}, {}) is not a grade",
                    r.rating, r.user_id, r.app_id
                )));
            }
            let ui = user_idx[r.user_id.as_str()];
            let ai = app_idx[r.app_id.as_str()] as u32;
            rows[ui].push((ai, r.rating));
        }
        for (ui, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(ai, _)| ai);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate rating pair for user `{}`",
                    users[ui]
                )));
            }
        }
        Ok(RatingMatrix {
            users: users.into_iter().map(str::to_string).collect(),
            apps: apps.into_iter().map(str::to_string).collect(),
            rows,
        })
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn apps(&self) -> &[String] {
        &self.apps
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user_id)).ok()
    }

    pub fn app_index(&self, app_id: &str) -> Option<usize> {
        self.apps.binary_search_by(|a| a.as_str().cmp(app_id)).ok()
    }

    /// Sparse row of one user: (app index, grade) sorted by app index.
    pub fn row(&self, user: usize) -> &[(u32, f64)] {
        &self.rows[user]
    }

    pub fn entry(&self, user: usize, app: u32) -> Option<f64> {
        self.rows[user]
            .binary_search_by_key(&app, |&(a, _)| a)
            .ok()
            .map(|i| self.rows[user][i].1)
    }

    pub fn interaction_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// |entries| / (|users| · |apps|).
    pub fn sparsity(&self) -> f64 {
        let cells = self.users.len() * self.apps.len();
        if cells == 0 {
            0.0
        } else {
            self.interaction_count() as f64 / cells as f64
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.apps.len()]; self.users.len()];
        for (ui, row) in self.rows.iter().enumerate() {
            for &(ai, grade) in row {
                dense[ui][ai as usize] = grade;
            }
        }
        dense
    }

    /// Keeps only the entries listed in `keep` (per-user app-index sets);
    /// user and app axes are untouched.
    pub(crate) fn restricted(&self, keep: &[Vec<u32>]) -> RatingMatrix {
        assert_eq!(keep.len(), self.rows.len());
        let rows = self
            .rows
            .iter()
            .zip(keep)
            .map(|(row, keep_apps)| {
                let keep_set: HashSet<u32> = keep_apps.iter().copied().collect();
                row.iter()
                    .filter(|(ai, _)| keep_set.contains(ai))
                    .copied()
                    .collect()
            })
            .collect();
        RatingMatrix {
            users: self.users.clone(),
            apps: self.apps.clone(),
            rows,
        }
    }
}

/// Writes the human-readable ingest summary used by the CLI.
pub fn write_skip_report(out: &mut dyn Write, skipped: &[SkipNote]) -> Result<()> {
    for note in skipped {
        writeln!(out, "{}\t{}", note.line, note.message)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    pub(crate) fn app(id: &str) -> AppRecord {
        AppRecord {
            app_id: id.to_string(),
            category: "Tools".to_string(),
            provider: "acme".to_string(),
            content_rating: "Everyone".to_string(),
            has_ads: false,
            is_free: true,
            interactive_elements: vec![],
            avg_rating: 4.0,
            install_count: 1000,
            updated_date: NaiveDate::from_ymd_opt(2020, 5, 17).unwrap(),
            size: SizeSpec::Bytes(5 << 20),
            readme_text: "a tool".to_string(),
        }
    }

    fn rating(u: &str, a: &str, g: f64) -> RatingRecord {
        RatingRecord {
            user_id: u.to_string(),
            app_id: a.to_string(),
            rating: g,
        }
    }

    fn write_fixture(dir: &TempDir, apps: &str, ratings: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let apps_path = dir.path().join("apps.csv");
        let ratings_path = dir.path().join("ratings.csv");
        fs::write(&apps_path, apps).unwrap();
        fs::write(&ratings_path, ratings).unwrap();
        (apps_path, ratings_path)
    }

    const APPS_TWO: &str = "\
app_id,category,provider,content_rating,has_ads,is_free,interactive_elements,avg_rating,install_count,updated_date,size_bytes,readme_text
a1,Tools,acme,Everyone,true,true,Users Interact;In-Game Purchases,4.3,150000,2020-05-17,5242880,\"A handy tool, with commas\"
a2,Games,zenith,Teen,false,false,,3.9,5000000,2019-11-02,VARIES,An action game
";

    #[test]
    fn loads_two_apps_three_ratings() {
        let dir = TempDir::new().unwrap();
        let ratings = "user_id,app_id,rating\nu1,a1,1.0\nu1,a2,0.6\nu2,a1,0.2\n";
        let (apps_path, ratings_path) = write_fixture(&dir, APPS_TWO, ratings);
        let ds = load_dataset(&apps_path, &ratings_path).unwrap();
        assert_eq!(ds.apps.len(), 2);
        assert_eq!(ds.ratings.len(), 3);
        assert!(ds.skipped.is_empty());
        assert_eq!(ds.apps[0].app_id, "a1");
        assert_eq!(
            ds.apps[0].interactive_elements,
            vec!["In-Game Purchases".to_string(), "Users Interact".to_string()]
        );
        assert_eq!(ds.apps[1].size, SizeSpec::Varies);
        assert!(!ds.apps[1].is_free);
        assert_eq!(ds.ratings[1].rating, 0.6);
    }

    #[test]
    fn rejects_grade_outside_the_five_values() {
        let dir = TempDir::new().unwrap();
        let ratings = "user_id,app_id,rating\nu1,a1,0.3\n";
        let (apps_path, ratings_path) = write_fixture(&dir, APPS_TWO, ratings);
        let err = load_dataset(&apps_path, &ratings_path).unwrap_err();
        match err {
            Error::Ingest { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "rating");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_app_reference_is_skipped_not_fatal() {
        let dir = TempDir::new().unwrap();
        let ratings = "user_id,app_id,rating\nu1,a1,1.0\nu1,x9,0.8\n";
        let (apps_path, ratings_path) = write_fixture(&dir, APPS_TWO, ratings);
        let ds = load_dataset(&apps_path, &ratings_path).unwrap();
        assert_eq!(ds.ratings.len(), 1);
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(ds.skipped[0].line, 3);
        assert!(ds.skipped[0].message.contains("x9"));
    }

    #[test]
    fn duplicate_rating_last_write_wins_and_is_flagged() {
        let dir = TempDir::new().unwrap();
        let ratings = "user_id,app_id,rating\nu1,a1,0.2\nu1,a1,1.0\n";
        let (apps_path, ratings_path) = write_fixture(&dir, APPS_TWO, ratings);
        let ds = load_dataset(&apps_path, &ratings_path).unwrap();
        assert_eq!(ds.ratings.len(), 1);
        assert_eq!(ds.ratings[0].rating, 1.0);
        assert_eq!(ds.skipped.len(), 1);
    }

    #[test]
    fn duplicate_app_id_is_fatal() {
        let dir = TempDir::new().unwrap();
        let apps = "\
app_id,category,provider,content_rating,has_ads,is_free,interactive_elements,avg_rating,install_count,updated_date,size_bytes,readme_text
a1,Tools,acme,Everyone,true,true,,4.3,1,2020-05-17,1,x
a1,Games,zenith,Teen,false,false,,3.9,1,2019-11-02,1,y
";
        let (apps_path, ratings_path) = write_fixture(&dir, apps, "user_id,app_id,rating\n");
        assert!(load_dataset(&apps_path, &ratings_path).is_err());
    }

    #[test]
    fn malformed_fields_name_file_line_and_field() {
        let dir = TempDir::new().unwrap();
        let apps = "\
app_id,category,provider,content_rating,has_ads,is_free,interactive_elements,avg_rating,install_count,updated_date,size_bytes,readme_text
a1,Tools,acme,Everyone,yes,true,,4.3,1,2020-05-17,1,x
";
        let (apps_path, ratings_path) = write_fixture(&dir, apps, "user_id,app_id,rating\n");
        match load_dataset(&apps_path, &ratings_path).unwrap_err() {
            Error::Ingest { line, field, .. } => {
                assert_eq!((line, field.as_str()), (2, "has_ads"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = TempDir::new().unwrap();
        let (apps_path, ratings_path) =
            write_fixture(&dir, "app_id,category\n", "user_id,app_id,rating\n");
        assert!(matches!(
            load_dataset(&apps_path, &ratings_path),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn grade_mapping_is_exact() {
        assert_eq!(grade_from_stars(1), Some(0.2));
        assert_eq!(grade_from_stars(3), Some(0.6));
        assert_eq!(grade_from_stars(5), Some(1.0));
        assert_eq!(grade_from_stars(0), None);
        assert_eq!(grade_from_stars(6), None);
        for s in 1..=5u8 {
            assert!(is_valid_grade(grade_from_stars(s).unwrap()));
        }
        assert!(!is_valid_grade(0.3));
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = TempDir::new().unwrap();
        let ratings = "user_id,app_id,rating\nu1,a1,1.0\nu2,a2,0.4\n";
        let (apps_path, ratings_path) = write_fixture(&dir, APPS_TWO, ratings);
        let ds = load_dataset(&apps_path, &ratings_path).unwrap();

        let apps2 = dir.path().join("apps2.csv");
        let ratings2 = dir.path().join("ratings2.csv");
        write_dataset(&apps2, &ratings2, &ds.apps, &ds.ratings).unwrap();
        let ds2 = load_dataset(&apps2, &ratings2).unwrap();
        assert_eq!(ds.apps, ds2.apps);
        assert_eq!(ds.ratings, ds2.ratings);
    }

    #[test]
    fn cold_start_removes_app_below_threshold() {
        // a1 has 9 raters, a2 has 10.
        let apps = vec![app("a1"), app("a2")];
        let mut ratings = Vec::new();
        for u in 0..9 {
            ratings.push(rating(&format!("u{u}"), "a1", 0.6));
        }
        for u in 0..10 {
            ratings.push(rating(&format!("u{u}"), "a2", 0.6));
        }
        // Keep users alive: min_user 1.
        let out = filter_cold_start(&apps, &ratings, 1, 10).unwrap();
        assert_eq!(out.removed_apps, vec!["a1".to_string()]);
        assert_eq!(out.apps.len(), 1);
        assert!(out.ratings.iter().all(|r| r.app_id == "a2"));
    }

    #[test]
    fn cold_start_keeps_user_exactly_at_threshold() {
        // 10 apps, each rated by u0 plus nine fillers so apps survive.
        let apps: Vec<AppRecord> = (0..10).map(|i| app(&format!("a{i}"))).collect();
        let mut ratings = Vec::new();
        for i in 0..10 {
            ratings.push(rating("u0", &format!("a{i}"), 0.8));
            for f in 0..9 {
                ratings.push(rating(&format!("f{f}"), &format!("a{i}"), 0.8));
            }
        }
        let out = filter_cold_start(&apps, &ratings, 10, 10).unwrap();
        assert!(!out.removed_users.contains(&"u0".to_string()));
        // Fillers have 10 apps each too.
        assert!(out.removed_users.is_empty());
        assert!(!out.second_pass_would_change);
    }

    #[test]
    fn cold_start_chain_case_removes_user_after_app_pass() {
        // u loses a1 in the app pass and then falls below min_user = 2,
        // even though u originally had 2 rated apps.
        let apps = vec![app("a1"), app("a2"), app("a3")];
        let ratings = vec![
            rating("u", "a1", 0.6),
            rating("u", "a2", 0.6),
            rating("v", "a2", 0.6),
            rating("v", "a3", 0.6),
            rating("w", "a2", 0.6),
            rating("w", "a3", 0.6),
        ];
        // a1 has 1 rater < 2 → removed; u then has 1 < 2 → removed.
        let out = filter_cold_start(&apps, &ratings, 2, 2).unwrap();
        assert_eq!(out.removed_apps, vec!["a1".to_string()]);
        assert_eq!(out.removed_users, vec!["u".to_string()]);
        assert_eq!(out.ratings.len(), 4);
        assert!(!out.second_pass_would_change);
    }

    #[test]
    fn cold_start_reports_when_second_pass_would_differ() {
        // After removing u1, a1 drops to 1 rater; a second app pass would
        // remove a1, so the filter must flag it (but not do it).
        let apps = vec![app("a1"), app("a2"), app("a3")];
        let ratings = vec![
            rating("u1", "a1", 0.6),
            rating("u2", "a1", 0.6),
            rating("u2", "a2", 0.6),
            rating("u2", "a3", 0.6),
            rating("u3", "a2", 0.6),
            rating("u3", "a3", 0.6),
        ];
        let out = filter_cold_start(&apps, &ratings, 2, 2).unwrap();
        assert_eq!(out.removed_users, vec!["u1".to_string()]);
        assert!(out.apps.iter().any(|a| a.app_id == "a1"));
        assert!(out.second_pass_would_change);
    }

    #[test]
    fn cold_start_can_empty_the_dataset() {
        let apps = vec![app("a1")];
        let ratings = vec![rating("u", "a1", 0.6)];
        assert!(matches!(
            filter_cold_start(&apps, &ratings, 10, 10),
            Err(Error::EmptyAfterFilter)
        ));
    }

    #[test]
    fn matrix_single_entry() {
        let m = RatingMatrix::build(&[rating("u1", "a1", 1.0)]).unwrap();
        assert_eq!(m.users(), &["u1".to_string()]);
        assert_eq!(m.apps(), &["a1".to_string()]);
        assert_eq!(m.entry(0, 0), Some(1.0));
        assert_eq!(m.interaction_count(), 1);
    }

    #[test]
    fn matrix_matches_hand_written_table() {
        // 3 users × 2 apps; ids deliberately unsorted in the input.
        let ratings = vec![
            rating("u2", "b", 0.4),
            rating("u1", "a", 1.0),
            rating("u3", "a", 0.2),
            rating("u2", "a", 0.8),
        ];
        let m = RatingMatrix::build(&ratings).unwrap();
        assert_eq!(m.users(), &["u1".to_string(), "u2".to_string(), "u3".to_string()]);
        assert_eq!(m.apps(), &["a".to_string(), "b".to_string()]);
        let expected = vec![vec![1.0, 0.0], vec![0.8, 0.4], vec![0.2, 0.0]];
        assert_eq!(m.to_dense(), expected);
        assert_eq!(m.sparsity(), 4.0 / 6.0);
    }

    #[test]
    fn matrix_rejects_duplicate_pairs() {
        let ratings = vec![rating("u", "a", 0.2), rating("u", "a", 0.4)];
        assert!(RatingMatrix::build(&ratings).is_err());
    }

    #[test]
    fn sparsity_on_constructed_fixture() {
        // 2 users × 4 apps with 2 entries → 0.25.
        let ratings = vec![
            rating("u1", "a1", 0.2),
            rating("u2", "a4", 0.4),
            rating("u1", "a2", 0.6),
            rating("u2", "a3", 0.8),
        ];
        let m = RatingMatrix::build(&ratings).unwrap();
        assert_eq!(m.sparsity(), 0.5);
        let ratings = vec![rating("u1", "a1", 0.2), rating("u2", "a2", 0.4)];
        let m = RatingMatrix::build(&ratings).unwrap();
        assert_eq!(m.sparsity(), 0.5);
    }
}
