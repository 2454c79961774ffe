use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DatasetSplit, InteractionDataset, Interner};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Separator {
    Tab,
    Comma,
}

impl Separator {
    fn detect(line: &str) -> Self {
        if line.contains('\t') {
            Separator::Tab
        } else {
            Separator::Comma
        }
    }

    fn char(self) -> char {
        match self {
            Separator::Tab => '\t',
            Separator::Comma => ',',
        }
    }
}

/// Read `context, item[, rating]` records from a text file.
///
/// With a threshold, only records whose rating is strictly greater are kept.
pub fn load_interactions(path: &Path, rating_threshold: Option<f64>) -> Result<InteractionDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), path, rating_threshold)
}

pub fn parse_interactions<R: BufRead>(
    reader: R,
    path: &Path,
    rating_threshold: Option<f64>,
) -> Result<InteractionDataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut sep = None;
    let mut arity = None;
    let mut contexts = Interner::default();
    let mut items = Interner::default();
    let mut lists: Vec<Vec<usize>> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let sep = *sep.get_or_insert_with(|| Separator::detect(line));
        let fields: Vec<&str> = line.split(sep.char()).map(str::trim).collect();

        let n = fields.len();
        if !(2..=3).contains(&n) || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err(
                lineno,
                format!("expected `context{0}item[{0}rating]`, got {line:?}", sep.char()),
            ));
        }
        match arity {
            None => {
                if n == 2 && rating_threshold.is_some() {
                    return Err(Error::Config(format!(
                        "a rating threshold was given but {} has no rating column",
                        path.display()
                    )));
                }
                arity = Some(n);
            }
            Some(a) if a != n => {
                return Err(parse_err(
                    lineno,
                    format!("expected {a} fields like the first record, got {n}"),
                ));
            }
            Some(_) => {}
        }

        if n == 3 {
            let rating: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(lineno, format!("rating {:?} is not a number", fields[2])))?;
            if let Some(t) = rating_threshold {
                if rating <= t {
                    continue;
                }
            }
        }

        let c = contexts.intern(fields[0]);
        let i = items.intern(fields[1]);
        if c == lists.len() {
            lists.push(Vec::new());
        }
        lists[c].push(i);
    }

    InteractionDataset::with_ids(lists, contexts.into_ids(), items.into_ids())
}

/// Provenance recorded next to the split files.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMeta {
    pub seed: u64,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub num_contexts: usize,
    pub num_items: usize,
    pub rating_threshold: Option<f64>,
    pub min_interactions: usize,
}

impl SplitMeta {
    fn render(&self) -> String {
        let threshold = self
            .rating_threshold
            .map_or_else(|| "none".to_string(), |t| t.to_string());
        format!(
            "seed={}\ntrain_frac={}\nvalid_frac={}\nnum_contexts={}\nnum_items={}\n\
             rating_threshold={}\nmin_interactions={}\nfilter_order=rating_threshold,min_interactions\n",
            self.seed,
            self.train_frac,
            self.valid_frac,
            self.num_contexts,
            self.num_items,
            threshold,
            self.min_interactions,
        )
    }
}

fn write_part(path: &Path, ds: &InteractionDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (c, items) in ds.all_positives().iter().enumerate() {
        let cid = &ds.context_ids()[c];
        for &i in items {
            writeln!(w, "{}\t{}", cid, ds.item_ids()[i]).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut body = ids.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Write `train.tsv`, `valid.tsv`, `test.tsv`, `split.meta`, plus the context
/// and item id lists that let [`load_split`] restore the exact indexing.
pub fn write_split(dir: &Path, split: &DatasetSplit, meta: &SplitMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_part(&dir.join("train.tsv"), &split.train)?;
    write_part(&dir.join("valid.tsv"), &split.validation)?;
    write_part(&dir.join("test.tsv"), &split.test)?;
    write_ids(&dir.join("contexts.txt"), split.train.context_ids())?;
    write_ids(&dir.join("items.txt"), split.train.item_ids())?;
    let meta_path = dir.join("split.meta");
    fs::write(&meta_path, meta.render()).map_err(|e| Error::io(meta_path, e))
}

fn read_ids(path: &Path, interner: &mut Interner) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for id in text.lines().filter(|l| !l.is_empty()) {
        interner.intern(id);
    }
    Ok(())
}

fn read_part(
    path: &Path,
    contexts: &mut Interner,
    items: &mut Interner,
) -> Result<Vec<(usize, usize)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(i), None) if !c.is_empty() && !i.is_empty() => {
                pairs.push((contexts.intern(c), items.intern(i)));
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `context<TAB>item`, got {line:?}"),
                })
            }
        }
    }
    Ok(pairs)
}

/// Load a split directory written by [`write_split`].
pub fn load_split(dir: &Path) -> Result<DatasetSplit> {
    let mut contexts = Interner::default();
    let mut items = Interner::default();
    read_ids(&dir.join("contexts.txt"), &mut contexts)?;
    read_ids(&dir.join("items.txt"), &mut items)?;

    let parts: Vec<Vec<(usize, usize)>> = ["train.tsv", "valid.tsv", "test.tsv"]
        .iter()
        .map(|f| read_part(&dir.join(f), &mut contexts, &mut items))
        .collect::<Result<_>>()?;

    let meta = read_meta(&dir.join("split.meta"))?;
    let n = contexts.len();
    let context_ids = contexts.into_ids();
    let item_ids = items.into_ids();
    let mut built = Vec::with_capacity(3);
    for pairs in parts {
        let mut lists = vec![Vec::new(); n];
        for (c, i) in pairs {
            lists[c].push(i);
        }
        built.push(InteractionDataset::with_ids(
            lists,
            context_ids.clone(),
            item_ids.clone(),
        )?);
    }
    let test = built.pop().unwrap();
    let validation = built.pop().unwrap();
    let train = built.pop().unwrap();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed: meta.0,
        train_frac: meta.1,
        valid_frac: meta.2,
    })
}

fn read_meta(path: &PathBuf) -> Result<(u64, f64, f64)> {
    if !path.exists() {
        return Ok((0, f64::NAN, f64::NAN));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seed = 0;
    let mut tf = f64::NAN;
    let mut vf = f64::NAN;
    for (idx, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let bad = || Error::Parse {
            path: path.clone(),
            line: idx + 1,
            msg: format!("bad value for {k}: {v:?}"),
        };
        match k.trim() {
            "seed" => seed = v.trim().parse().map_err(|_| bad())?,
            "train_frac" => tf = v.trim().parse().map_err(|_| bad())?,
            "valid_frac" => vf = v.trim().parse().map_err(|_| bad())?,
            _ => {}
        }
    }
    Ok((seed, tf, vf))
}
