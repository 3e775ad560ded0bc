//! Preprocessing end to end and the split directory format.
//!
//! A split directory holds, all comma-separated with a header line:
//!
//! | file | columns |
//! |------|---------|
//! | `users.csv` | `user_index,user_id` |
//! | `items.csv` | `item_index,item_id` |
//! | `categories.csv` | `category_index,name` |
//! | `item_categories.csv` | `item_index,category_index` |
//! | `train.csv` | `user_index,item_index` (training users) |
//! | `validation_foldin.csv`, `validation_heldout.csv` | `user_index,item_index` |
//! | `test_foldin.csv`, `test_heldout.csv` | `user_index,item_index` |
//! | `examples.csv` | `user_index,condition_index` (−1 = unconditioned) |
//!
//! plus `manifest.json` ([`SplitManifest`]) with the counts, settings and a
//! sha256 of every file above.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cvae_core::data::{
    expand_conditions, filter_interactions, split_heldout, ConditionVector, HeldoutUser, InteractionMatrix,
    ItemConditionMatrix, Split, TrainingExample,
};
use cvae_core::eval::{build_cases, ProtocolKind};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::manifest::{fingerprint_file, read_json, sha256_hex, write_atomic, write_json};

pub const SPLIT_FORMAT: &str = "cvae-split";
pub const SPLIT_VERSION: u32 = 1;

const FILES: [&str; 10] = [
    "users.csv",
    "items.csv",
    "categories.csv",
    "item_categories.csv",
    "train.csv",
    "validation_foldin.csv",
    "validation_heldout.csv",
    "test_foldin.csv",
    "test_heldout.csv",
    "examples.csv",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format: String,
    pub version: u32,
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub n_interactions: usize,
    pub density_percent: f64,
    pub n_train_users: usize,
    pub n_validation_users: usize,
    pub n_test_users: usize,
    pub n_training_examples: usize,
    /// Cases under the total protocol.
    pub n_validation_examples: usize,
    pub n_test_examples: usize,
    pub seed: u64,
    pub rating_threshold: f64,
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub foldin_fraction: f64,
    pub drop_categories: Vec<String>,
    pub skipped_category_lines: usize,
    /// sha256 of the raw ratings and category files.
    pub input_fingerprints: BTreeMap<String, String>,
    /// sha256 of every split file.
    pub files: BTreeMap<String, String>,
}

/// Everything the later stages need from preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub matrix: InteractionMatrix,
    pub g: ItemConditionMatrix,
    pub split: Split,
    pub examples: Vec<TrainingExample>,
    pub manifest: SplitManifest,
}

impl Prepared {
    /// One unconditioned example per training user, for the `s = 0`
    /// baseline.
    pub fn baseline_examples(&self) -> Vec<TrainingExample> {
        self.split
            .train_users
            .iter()
            .map(|&u| TrainingExample {
                user: u,
                condition: ConditionVector::unconditioned(0),
            })
            .collect()
    }
}

/// Runs loading, filtering, category resolution, the held-out split and
/// condition expansion. Nothing is written.
pub fn prepare(cfg: &Config) -> Result<Prepared> {
    let d = &cfg.data;
    let ratings = crate::io::load_ratings(&d.ratings, crate::io::parse_delimiter(&d.delimiter)?, d.rating_threshold)?;
    let matrix = filter_interactions(&ratings, d.min_user_interactions, d.min_item_interactions)?;
    let loaded = crate::io::load_item_conditions(
        &d.categories,
        crate::io::parse_delimiter(&d.category_delimiter)?,
        &matrix,
        &d.drop_categories,
    )?;
    let split = split_heldout(&matrix, &cfg.split_spec())?;
    let examples = expand_conditions(&matrix, &loaded.g, &split.train_users);
    let mut inputs = BTreeMap::new();
    inputs.insert("ratings".to_string(), fingerprint_file(&d.ratings)?);
    inputs.insert("categories".to_string(), fingerprint_file(&d.categories)?);
    let g = loaded.g;
    let manifest = SplitManifest {
        format: SPLIT_FORMAT.into(),
        version: SPLIT_VERSION,
        n_users: matrix.n_users(),
        n_items: matrix.n_items(),
        n_categories: g.n_categories(),
        n_interactions: matrix.nnz(),
        density_percent: 100.0 * matrix.density(),
        n_train_users: split.train_users.len(),
        n_validation_users: split.validation.len(),
        n_test_users: split.test.len(),
        n_training_examples: examples.len(),
        n_validation_examples: build_cases(&split.validation, &g, ProtocolKind::Total).len(),
        n_test_examples: build_cases(&split.test, &g, ProtocolKind::Total).len(),
        seed: cfg.seed,
        rating_threshold: d.rating_threshold,
        min_user_interactions: d.min_user_interactions,
        min_item_interactions: d.min_item_interactions,
        foldin_fraction: d.foldin_fraction,
        drop_categories: d.drop_categories.clone(),
        skipped_category_lines: loaded.skipped,
        input_fingerprints: inputs,
        files: BTreeMap::new(),
    };
    Ok(Prepared {
        matrix,
        g,
        split,
        examples,
        manifest,
    })
}

fn pairs_csv<'a>(rows: impl Iterator<Item = (u32, &'a [u32])>) -> String {
    let mut s = String::from("user_index,item_index\n");
    for (u, items) in rows {
        for i in items {
            writeln!(s, "{u},{i}").unwrap();
        }
    }
    s
}

fn render(p: &Prepared) -> Vec<(&'static str, String)> {
    let mut users = String::from("user_index,user_id\n");
    for (i, id) in p.matrix.user_ids().iter().enumerate() {
        writeln!(users, "{i},{id}").unwrap();
    }
    let mut items = String::from("item_index,item_id\n");
    for (i, id) in p.matrix.item_ids().iter().enumerate() {
        writeln!(items, "{i},{id}").unwrap();
    }
    let mut cats = String::from("category_index,name\n");
    for (i, n) in p.g.category_names().iter().enumerate() {
        writeln!(cats, "{i},{n}").unwrap();
    }
    let mut ic = String::from("item_index,category_index\n");
    for (i, row) in p.g.rows().iter().enumerate() {
        for c in row {
            writeln!(ic, "{i},{c}").unwrap();
        }
    }
    let train = pairs_csv(p.split.train_users.iter().map(|&u| (u, p.matrix.row(u as usize))));
    let foldin = |hs: &[HeldoutUser]| pairs_csv(hs.iter().map(|h| (h.user, h.foldin.as_slice())));
    let heldout = |hs: &[HeldoutUser]| pairs_csv(hs.iter().map(|h| (h.user, h.heldout.as_slice())));
    let mut ex = String::from("user_index,condition_index\n");
    for e in &p.examples {
        writeln!(ex, "{},{}", e.user, e.condition.signed_index()).unwrap();
    }
    let contents = vec![
        users,
        items,
        cats,
        ic,
        train,
        foldin(&p.split.validation),
        heldout(&p.split.validation),
        foldin(&p.split.test),
        heldout(&p.split.test),
        ex,
    ];
    FILES.into_iter().zip(contents).collect()
}

/// Writes the split directory; files are fully rendered before anything
/// touches the disk. Returns the manifest as written.
pub fn write_split(dir: &Path, p: &Prepared) -> Result<SplitManifest> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut manifest = p.manifest.clone();
    let rendered = render(p);
    for (name, text) in &rendered {
        manifest.files.insert(name.to_string(), sha256_hex(text.as_bytes()));
    }
    for (name, text) in rendered {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn read_table(dir: &Path, name: &str, manifest: &SplitManifest) -> Result<Vec<(String, String)>> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(Error::io(&path))?;
    if manifest.files.get(name).map(String::as_str) != Some(sha256_hex(&bytes).as_str()) {
        return Err(Error::format(&path, "content does not match the split manifest"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(&path, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::format(&path, "expected two columns"));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(dir: &Path, name: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::format(&dir.join(name), format!("bad number {v:?}")))
}

fn index_pairs(dir: &Path, name: &str, manifest: &SplitManifest) -> Result<Vec<(u32, u32)>> {
    read_table(dir, name, manifest)?
        .into_iter()
        .map(|(a, b)| Ok((num(dir, name, &a)?, num(dir, name, &b)?)))
        .collect()
}

fn heldout_users(dir: &Path, prefix: &str, manifest: &SplitManifest) -> Result<Vec<HeldoutUser>> {
    let mut users: BTreeMap<u32, HeldoutUser> = BTreeMap::new();
    for (part, is_foldin) in [("foldin", true), ("heldout", false)] {
        for (u, i) in index_pairs(dir, &format!("{prefix}_{part}.csv"), manifest)? {
            let h = users.entry(u).or_insert_with(|| HeldoutUser {
                user: u,
                foldin: Vec::new(),
                heldout: Vec::new(),
            });
            if is_foldin {
                h.foldin.push(i);
            } else {
                h.heldout.push(i);
            }
        }
    }
    Ok(users.into_values().collect())
}

/// Reads a split directory written by [`write_split`], verifying every
/// file against the manifest.
pub fn read_split(dir: &Path) -> Result<Prepared> {
    let manifest: SplitManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != SPLIT_FORMAT || manifest.version != SPLIT_VERSION {
        return Err(Error::format(
            &dir.join("manifest.json"),
            format!("unsupported split format {} v{}", manifest.format, manifest.version),
        ));
    }
    let user_ids: Vec<String> = read_table(dir, "users.csv", &manifest)?.into_iter().map(|(_, id)| id).collect();
    let item_ids: Vec<String> = read_table(dir, "items.csv", &manifest)?.into_iter().map(|(_, id)| id).collect();
    let names: Vec<String> = read_table(dir, "categories.csv", &manifest)?.into_iter().map(|(_, n)| n).collect();
    let mut g_rows = vec![Vec::new(); item_ids.len()];
    for (i, c) in index_pairs(dir, "item_categories.csv", &manifest)? {
        g_rows
            .get_mut(i as usize)
            .ok_or_else(|| Error::format(&dir.join("item_categories.csv"), "item index out of range"))?
            .push(c);
    }
    let g = ItemConditionMatrix::new(g_rows, names)?;

    let mut rows = vec![Vec::new(); user_ids.len()];
    let mut train_users = Vec::new();
    for (u, i) in index_pairs(dir, "train.csv", &manifest)? {
        rows.get_mut(u as usize)
            .ok_or_else(|| Error::format(&dir.join("train.csv"), "user index out of range"))?
            .push(i);
        if train_users.last() != Some(&u) {
            train_users.push(u);
        }
    }
    let validation = heldout_users(dir, "validation", &manifest)?;
    let test = heldout_users(dir, "test", &manifest)?;
    for h in validation.iter().chain(&test) {
        let row = rows
            .get_mut(h.user as usize)
            .ok_or_else(|| Error::format(dir, "held-out user index out of range"))?;
        row.extend(&h.foldin);
        row.extend(&h.heldout);
    }
    let matrix = InteractionMatrix::new(rows, user_ids, item_ids)?;
    let s = g.n_categories();
    let examples = read_table(dir, "examples.csv", &manifest)?
        .into_iter()
        .map(|(u, c)| {
            Ok(TrainingExample {
                user: num(dir, "examples.csv", &u)?,
                condition: ConditionVector::from_signed(s, num(dir, "examples.csv", &c)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if matrix.n_items() != manifest.n_items || s != manifest.n_categories || matrix.n_users() != manifest.n_users {
        return Err(Error::format(dir, "split files disagree with the manifest counts"));
    }
    train_users.sort_unstable();
    train_users.dedup();
    Ok(Prepared {
        matrix,
        g,
        split: Split {
            train_users,
            validation,
            test,
        },
        examples,
        manifest,
    })
}
