use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sktkit::deplin::{delinearize, DepSampleConfig, RepairReport};
use sktkit::metrics::{cer_wer, diff_report, lemma_accuracy, normalize, perfect_match, render_kv, uas_las, DiffCategory, EvalReport, PmOptions};
use sktkit::taskgen::read_samples;
use sktkit::types::split_source;

use crate::io::{create_output, open_input};
use crate::Evaluate;

#[derive(Serialize)]
struct JsonOut<'a> {
    samples: usize,
    metrics: &'a [EvalReport],
    diff: BTreeMap<DiffCategory, usize>,
}

fn prefix_of(source: &str) -> &str {
    split_source(source).map_or("S", |(_, p, _)| p)
}

/// Lemma field of every gold unit against the unit at the same position in
/// the prediction.
fn lemma_pairs(prefix: &str, gold: &str, pred: &str, joiner: char, out_gold: &mut Vec<String>, out_pred: &mut Vec<String>) {
    let field = prefix.find('L').expect("L task");
    let pred_units: Vec<&str> = pred.split_whitespace().collect();
    for (i, g) in gold.split_whitespace().enumerate() {
        out_gold.push(g.split(joiner).nth(field).unwrap_or("").to_string());
        out_pred.push(pred_units.get(i).and_then(|p| p.split(joiner).nth(field)).unwrap_or("").to_string());
    }
}

pub fn run(args: Evaluate) -> Result<()> {
    let gold = read_samples(open_input(Some(&args.gold))?).with_context(|| format!("reading {}", args.gold.display()))?;
    let pred = read_samples(open_input(Some(&args.pred))?).with_context(|| format!("reading {}", args.pred.display()))?;
    if gold.len() != pred.len() {
        bail!("{} gold samples but {} predictions", gold.len(), pred.len());
    }
    if gold.is_empty() {
        bail!("no samples to evaluate");
    }
    for (n, ((gs, _), (ps, _))) in gold.iter().zip(&pred).enumerate() {
        if normalize(gs) != normalize(ps) {
            bail!("sample {}: prediction is for `{ps}`, gold source is `{gs}`", n + 1);
        }
    }
    let joiner = args.joiner.unwrap_or('_');
    let opts = PmOptions { normalize: !args.no_normalize };
    let sources: Vec<&str> = gold.iter().map(|(s, _)| s.as_str()).collect();
    let gold_t: Vec<&str> = gold.iter().map(|(_, t)| t.as_str()).collect();
    let pred_t: Vec<&str> = pred.iter().map(|(_, t)| t.as_str()).collect();

    let mut reports = vec![perfect_match(&pred_t, &gold_t, None, opts)?];
    let mut by_prefix: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        by_prefix.entry(prefix_of(s)).or_default().push(i);
    }
    if by_prefix.len() > 1 {
        for (prefix, idx) in &by_prefix {
            let p: Vec<&str> = idx.iter().map(|&i| pred_t[i]).collect();
            let g: Vec<&str> = idx.iter().map(|&i| gold_t[i]).collect();
            let mut r = perfect_match(&p, &g, None, opts)?;
            r.metric = format!("PM.{prefix}");
            reports.push(r);
        }
    }

    let (mut lg, mut lp) = (Vec::new(), Vec::new());
    for (prefix, idx) in by_prefix.iter().filter(|(p, _)| p.contains('L') && **p != "O") {
        for &i in idx {
            lemma_pairs(prefix, gold_t[i], pred_t[i], joiner, &mut lg, &mut lp);
        }
    }
    if !lg.is_empty() {
        reports.push(lemma_accuracy(&lp, &lg)?);
    }

    if let Some(idx) = by_prefix.get("D") {
        let cfg = DepSampleConfig::default();
        let mut gold_trees = Vec::new();
        let mut pred_trees = Vec::new();
        let mut repairs = RepairReport::default();
        for &i in idx {
            let (g, grep) = delinearize(sources[i], gold_t[i], &cfg);
            if grep.total() > 0 {
                bail!("sample {}: gold dependency target is not a valid tree", i + 1);
            }
            let (p, prep) = delinearize(sources[i], pred_t[i], &cfg);
            repairs.add(&prep);
            gold_trees.push(g);
            pred_trees.push(p);
        }
        let (mut uas, las) = uas_las(&pred_trees, &gold_trees)?;
        uas.repairs = Some(repairs);
        reports.push(uas);
        reports.push(las);
    }

    if let Some(idx) = by_prefix.get("O") {
        let p: Vec<&str> = idx.iter().map(|&i| pred_t[i]).collect();
        let g: Vec<&str> = idx.iter().map(|&i| gold_t[i]).collect();
        let (cer, wer) = cer_wer(&p, &g)?;
        reports.push(cer);
        reports.push(wer);
    }

    let diff = diff_report(&sources, &pred_t, &gold_t, joiner)?;
    if let Some(path) = &args.diff_report {
        let mut w = create_output(Some(path))?;
        w.write_all(diff.render().as_bytes())?;
        w.flush()?;
    }

    let mut w = create_output(args.out.output.as_deref())?;
    if args.json {
        let j = JsonOut { samples: gold.len(), metrics: &reports, diff: diff.counts.clone() };
        serde_json::to_writer_pretty(&mut w, &j)?;
        writeln!(w)?;
    } else {
        writeln!(w, "samples  {}", gold.len())?;
        for r in &reports {
            writeln!(w, "{r}")?;
        }
        for (c, n) in &diff.counts {
            writeln!(w, "diff {c}={n}")?;
        }
        writeln!(w)?;
        write!(w, "{}", render_kv(&reports))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma_field_follows_the_prefix() {
        let (mut g, mut p) = (Vec::new(), Vec::new());
        lemma_pairs("SL", "yuvoḥ_yuṣmad hi_hi", "yuvoḥ_yuṣmad", '_', &mut g, &mut p);
        assert_eq!(g, ["yuṣmad", "hi"]);
        assert_eq!(p, ["yuṣmad", ""]);
        let (mut g, mut p) = (Vec::new(), Vec::new());
        lemma_pairs("LM", "mātṛ_fq", "mātṛ_fq", '_', &mut g, &mut p);
        assert_eq!(g, p);
    }
}
