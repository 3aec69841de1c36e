use rand::Rng;

/// One indexed vector, as the oracle sees it.
#[derive(Debug, Clone)]
pub struct OracleRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Scores every record, sorts the whole list by score descending then id
/// ascending, and keeps the first `k`.
pub fn top_k(records: &[OracleRecord], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = records
        .iter()
        .map(|r| (r.id.clone(), cosine(query, &r.vector)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// `n` records with unique ids. About one in ten repeats an earlier vector
/// under a different id so that exact score ties occur.
pub fn random_records(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<OracleRecord> {
    let mut out: Vec<OracleRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let vector = if i > 0 && rng.random_bool(0.1) {
            out[rng.random_range(0..i)].vector.clone()
        } else {
            random_vector(rng, dim)
        };
        // ids are not generated in sorted order
        out.push(OracleRecord {
            id: format!("{:08x}#{:05}", rng.random::<u32>(), i),
            vector,
        });
    }
    out
}
