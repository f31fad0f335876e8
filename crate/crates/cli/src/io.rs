use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sktkit::conllu::{ConlluOptions, ConlluReader, ReadStats};
use sktkit::Sentence;

use crate::UsageError;

fn is_stdio(p: &Path) -> bool {
    p.as_os_str() == "-"
}

/// Fails with a usage error unless every path exists.
pub fn require_existing<'a, I: IntoIterator<Item = &'a PathBuf>>(paths: I) -> Result<()> {
    for p in paths {
        if !is_stdio(p) && !p.exists() {
            return Err(UsageError(format!("{} does not exist", p.display())).into());
        }
    }
    Ok(())
}

pub fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    match path {
        None => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) if is_stdio(p) => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) => {
            require_existing([&p.to_path_buf()])?;
            Ok(Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?)))
        }
    }
}

pub fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if !is_stdio(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Ok(Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

/// CoNLL-U files under `paths`, directories expanded to their `.conllu`
/// files in name order.
pub fn corpus_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    require_existing(paths)?;
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "conllu"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(UsageError(format!("no .conllu files in {}", p.display())).into());
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Reads a corpus from files, directories or stdin. Sentences without a
/// text_id comment get the file stem.
pub fn load_corpus(paths: &[PathBuf], opts: &ConlluOptions) -> Result<(Vec<Sentence>, ReadStats)> {
    if paths.is_empty() {
        return Err(UsageError("no corpus given (--corpus or paths.corpus in the config)".into()).into());
    }
    let mut sentences = Vec::new();
    let mut total = ReadStats::default();
    for file in corpus_files(paths)? {
        let mut o = opts.clone();
        if !is_stdio(&file) && o.default_text_id.is_empty() {
            o.default_text_id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        let mut reader = ConlluReader::new(open_input(Some(&file))?, o);
        for s in reader.by_ref() {
            sentences.push(s.with_context(|| format!("reading {}", file.display()))?);
        }
        let st = reader.stats();
        total.sentences += st.sentences;
        total.tokens += st.tokens;
        total.skipped_multiword += st.skipped_multiword;
        total.skipped_empty_nodes += st.skipped_empty_nodes;
    }
    Ok((sentences, total))
}
