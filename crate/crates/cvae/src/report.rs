//! Text renderings of metrics and analyses. All tables are comma-separated
//! with a header line; floats use Rust's shortest round-trip formatting.

use std::fmt::Write as _;

use cvae_core::analyze::{ComponentPairReport, LatentTable, PcaResult, RankHistogram, SeparationReport};
use cvae_core::eval::{EvalReport, MetricKind, ProtocolKind, RankingMode};

/// One line of the metrics table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub mode: RankingMode,
    pub protocol: ProtocolKind,
    pub metric: MetricKind,
    pub k: usize,
    pub mean: f64,
    pub std_err: f64,
    pub n_cases: usize,
}

pub fn metric_rows(method: &str, report: &EvalReport) -> Vec<MetricRow> {
    report
        .summaries
        .iter()
        .map(|s| MetricRow {
            method: method.to_string(),
            mode: report.mode,
            protocol: report.protocol,
            metric: s.metric,
            k: s.k,
            mean: s.mean,
            std_err: s.std_err,
            n_cases: s.n_cases,
        })
        .collect()
}

fn mode_name(m: RankingMode) -> &'static str {
    match m {
        RankingMode::Full => "full",
        RankingMode::Filtered => "filtered",
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("method,ranking,protocol,metric,k,mean,stderr,n_cases\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.method,
            mode_name(r.mode),
            r.protocol,
            r.metric.name(),
            r.k,
            r.mean,
            r.std_err,
            r.n_cases
        )
        .unwrap();
    }
    s
}

fn short(metric: MetricKind) -> &'static str {
    match metric {
        MetricKind::Recall => "r",
        MetricKind::Ndcg => "n",
    }
}

/// One row per method, protocols side by side with their metric columns.
pub fn metrics_table(rows: &[MetricRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut protocols: Vec<ProtocolKind> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !protocols.contains(&r.protocol) {
            protocols.push(r.protocol);
        }
    }
    let mut columns: Vec<(ProtocolKind, MetricKind, usize)> = Vec::new();
    for r in rows {
        let key = (r.protocol, r.metric, r.k);
        if !columns.contains(&key) {
            columns.push(key);
        }
    }
    columns.sort_by_key(|&(p, m, k)| (protocols.iter().position(|&x| x == p), m != MetricKind::Recall, k));
    let width = methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6);

    let mut out = String::new();
    write!(out, "{:width$}", "").unwrap();
    for &p in &protocols {
        let n = columns.iter().filter(|c| c.0 == p).count();
        let title = match p {
            ProtocolKind::Total => "Total",
            ProtocolKind::Normal => "Normal",
            ProtocolKind::Conditioned => "Conditioned",
        };
        write!(out, " | {:^w$}", title, w = n * 7 - 1).unwrap();
    }
    out.push('\n');
    write!(out, "{:width$}", "Method").unwrap();
    for &p in &protocols {
        out.push_str(" |");
        for c in columns.iter().filter(|c| c.0 == p) {
            write!(out, " {:>6}", format!("{}@{}", short(c.1), c.2)).unwrap();
        }
    }
    out.push('\n');
    out.push_str(&"-".repeat(out.lines().last().unwrap().len()));
    out.push('\n');
    for m in &methods {
        write!(out, "{m:width$}").unwrap();
        for &p in &protocols {
            out.push_str(" |");
            for c in columns.iter().filter(|c| c.0 == p) {
                let v = rows
                    .iter()
                    .find(|r| r.method == *m && (r.protocol, r.metric, r.k) == *c)
                    .map_or("-".to_string(), |r| format!("{:.3}", r.mean));
                write!(out, " {v:>6}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Per-case metric values, in the report's metric order.
pub fn cases_csv(report: &EvalReport) -> String {
    let mut s = String::from("user_index,condition_index");
    for m in &report.summaries {
        write!(s, ",{}@{}", m.metric.name(), m.k).unwrap();
    }
    s.push('\n');
    for c in &report.cases {
        write!(s, "{},{}", c.user, c.condition.signed_index()).unwrap();
        for v in &c.values {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// `rank` is 1-based; `share` is `count / slots`.
pub fn histogram_csv(h: &RankHistogram) -> String {
    let mut s = String::from("rank,count,slots,share\n");
    for (r, (&b, &n)) in h.bins.iter().zip(&h.slots).enumerate() {
        let share = if n == 0 { 0.0 } else { b as f64 / n as f64 };
        writeln!(s, "{},{b},{n},{share}", r + 1).unwrap();
    }
    s
}

pub fn latents_csv(t: &LatentTable) -> String {
    let mut s = String::from("user_index,condition_index,condition");
    for j in 0..t.latent_dim {
        write!(s, ",mu_{j}").unwrap();
    }
    s.push('\n');
    for r in &t.rows {
        write!(s, "{},{},{}", r.user, r.condition, t.condition_label(r.condition)).unwrap();
        for v in &r.mu {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Components are numbered from 1.
pub fn pca_variance_csv(p: &PcaResult, first_component: usize) -> String {
    let total: f64 = p.explained_variance.iter().sum();
    let mut s = String::from("component,variance,share_of_reported\n");
    for (k, v) in p.explained_variance.iter().enumerate() {
        writeln!(s, "{},{v},{}", k + first_component, v / total).unwrap();
    }
    s
}

pub fn pca_components_csv(p: &PcaResult, first_component: usize) -> String {
    let d = p.components.cols();
    let mut s = String::from("component");
    for j in 0..d {
        write!(s, ",w_{j}").unwrap();
    }
    s.push('\n');
    for k in 0..p.n_components() {
        write!(s, "{}", k + first_component).unwrap();
        for v in p.components.row(k) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn pca_projections_csv(p: &PcaResult, table: &LatentTable, first_component: usize) -> String {
    let mut s = String::from("user_index,condition_index,condition");
    for k in 0..p.n_components() {
        write!(s, ",pc_{}", k + first_component).unwrap();
    }
    s.push('\n');
    for (r, row) in table.rows.iter().enumerate() {
        write!(s, "{},{},{}", row.user, row.condition, table.condition_label(row.condition)).unwrap();
        for v in p.projections.row(r) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Centroids of one component pair, components numbered from 1.
pub fn pair_csv(rep: &ComponentPairReport, table: &LatentTable, first_component: usize) -> String {
    let (a, b) = (rep.pair.0 + first_component, rep.pair.1 + first_component);
    let mut s = format!("condition_index,condition,rows,pc_{a},pc_{b}\n");
    for c in &rep.centroids {
        writeln!(
            s,
            "{},{},{},{},{}",
            c.condition,
            table.condition_label(c.condition),
            c.count,
            c.coords[0],
            c.coords[1]
        )
        .unwrap();
    }
    s
}

pub fn separation_csv(r: &SeparationReport) -> String {
    format!(
        "mean_inter_centroid,mean_intra_dispersion,ratio\n{},{},{}\n",
        r.mean_inter, r.mean_intra, r.ratio
    )
}
