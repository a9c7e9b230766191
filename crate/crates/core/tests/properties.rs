mod common;

use proptest::prelude::*;
use sqlstream::clustering::{kmedoids, DistMatrix, KMedoidsConfig};
use sqlstream::corpus::{Column, ColumnType, Schema};
use sqlstream::distance::{d_combined, d_sch, d_stru, HashedInstance};
use sqlstream::metrics::AccMatrix;
use sqlstream::par::ExecMode;
use sqlstream::sampling::{prompt_sample, random_sample, review_sample, SamplerConfig};
use sqlstream::sqlrep::{canonical_sql, exact_match, skeletonize, HashVector, SqlSkeleton, VocabTag};

const DIM: usize = 24;

fn bits() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), DIM)
}

fn vector(b: &[bool], tag: VocabTag) -> HashVector {
    HashVector::from_indices(tag, b.len(), b.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i))
}

fn inst(id: &str, s: &[bool], k: &[bool]) -> HashedInstance {
    HashedInstance {
        id: id.into(),
        schema: vector(s, VocabTag::Schema),
        structure: Some(vector(k, VocabTag::Keywords)),
    }
}

fn hashed_pool(max: usize) -> impl Strategy<Value = Vec<HashedInstance>> {
    prop::collection::vec((bits(), bits()), 1..max).prop_map(|v| {
        v.iter()
            .enumerate()
            .map(|(i, (s, k))| inst(&format!("p{i}"), s, k))
            .collect()
    })
}

fn singers() -> Schema {
    let col = |table, name: &str| Column {
        table,
        name: name.into(),
        ty: ColumnType::Number,
    };
    Schema::new(
        "concert",
        vec!["singer".into(), "concert".into()],
        vec![col(0, "name"), col(0, "age"), col(0, "country"), col(1, "year"), col(1, "stadium")],
    )
    .unwrap()
}

/// A random query over `singers()` and its column/table/value choices.
fn query() -> impl Strategy<Value = String> {
    let col = prop::sample::select(vec!["name", "age", "country"]);
    let agg = prop::sample::select(vec!["", "count", "avg", "max", "min", "sum"]);
    let cond = prop::option::of((prop::sample::select(vec!["age", "country"]), prop::sample::select(vec![">", "<", "="]), 0u32..100));
    let order = prop::option::of((prop::sample::select(vec!["age", "name"]), any::<bool>()));
    (col, agg, cond, order).prop_map(|(c, a, w, o)| {
        let head = if a.is_empty() { c.to_string() } else { format!("{a}({c})") };
        let mut sql = format!("SELECT {head} FROM singer");
        if let Some((wc, op, v)) = w {
            sql += &format!(" WHERE {wc} {op} {v}");
        }
        if let Some((oc, desc)) = o {
            sql += &format!(" ORDER BY {oc}{}", if desc { " DESC" } else { "" });
        }
        sql
    })
}

/// Same query with keyword case flipped and spacing around punctuation changed.
fn restyle(sql: &str, lower: bool, tight: bool) -> String {
    let mut out = sql.to_string();
    for kw in ["SELECT", "FROM", "WHERE", "ORDER BY", "DESC"] {
        let repl = if lower { kw.to_lowercase() } else { kw.to_string() };
        out = out.replace(kw, &repl);
    }
    if tight {
        out.replace("(", " ( ").replace(")", " ) ")
    } else {
        out.replace("  ", " ")
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distances_are_metrics(a in bits(), b in bits(), c in bits(), ka in bits(), kb in bits(), kc in bits()) {
        let (x, y, z) = (inst("x", &a, &ka), inst("y", &b, &kb), inst("z", &c, &kc));
        for d in [d_sch, d_stru] {
            prop_assert_eq!(d(&x, &y).unwrap(), d(&y, &x).unwrap());
            prop_assert_eq!(d(&x, &x).unwrap(), 0.0);
            prop_assert!(d(&x, &z).unwrap() <= d(&x, &y).unwrap() + d(&y, &z).unwrap());
        }
        prop_assert_eq!(d_combined(&x, &y).unwrap(), d_combined(&y, &x).unwrap());
        prop_assert_eq!(d_combined(&x, &x).unwrap(), 0.0);
        let direct = common::bit_distance(&x.schema, &y.schema);
        prop_assert_eq!(d_sch(&x, &y).unwrap(), direct);
    }

    #[test]
    fn exact_match_ignores_case_and_spacing(q in query(), lower in any::<bool>(), tight in any::<bool>()) {
        let v = restyle(&q, lower, tight);
        prop_assert!(exact_match(&q, &q));
        prop_assert!(exact_match(&q, &v), "{} vs {}", q, v);
        prop_assert!(exact_match(&v, &q));
        prop_assert_eq!(canonical_sql(&q).unwrap(), canonical_sql(&v).unwrap());
    }

    #[test]
    fn exact_match_sees_different_columns(q in query()) {
        let other = q.replacen("FROM singer", "FROM concert", 1);
        prop_assert!(!exact_match(&q, &other));
    }

    #[test]
    fn skeletons_are_stable(q in query(), lower in any::<bool>()) {
        let schema = singers();
        let sk = skeletonize(&q, &schema).unwrap();
        prop_assert_eq!(&SqlSkeleton::parse(&sk.to_string()).unwrap(), &sk);
        prop_assert_eq!(&skeletonize(&restyle(&q, lower, true), &schema).unwrap(), &sk);
        prop_assert_eq!(&skeletonize(&canonical_sql(&q).unwrap(), &schema).unwrap(), &sk);
        prop_assert!(sk.tokens().iter().all(|t| !["singer", "age", "name", "country"].contains(&t.as_str())));
    }

    #[test]
    fn review_sample_returns_distinct_pool_members(pool in hashed_pool(14), size in 1usize..8) {
        let s = review_sample(&pool, size, ExecMode::Sequential).unwrap();
        let mut idx = s.indices.clone();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), s.indices.len());
        prop_assert_eq!(idx.len(), size.min(pool.len()));
        prop_assert!(idx.iter().all(|&i| i < pool.len()));
        prop_assert_eq!(s.warnings.is_empty(), size <= pool.len());
        let par = review_sample(&pool, size, ExecMode::Parallel).unwrap();
        prop_assert_eq!(par.indices, s.indices);
    }

    #[test]
    fn prompt_sample_stays_inside_the_relevance_pool(
        past in hashed_pool(14),
        current in hashed_pool(4),
        n in 1usize..5,
        extra in 0usize..6,
    ) {
        let cfg = SamplerConfig { pool_size: n + extra, ..SamplerConfig::with_sizes(n, 1) };
        let s = prompt_sample(&past, &current, &cfg, ExecMode::Sequential).unwrap();
        prop_assert_eq!(s.pool.len(), (n + extra).min(past.len()));
        prop_assert_eq!(s.indices.len(), n.min(s.pool.len()));
        prop_assert!(s.indices.iter().all(|i| s.pool.contains(i)));
        prop_assert_eq!(s.scores.len(), past.len());
        // every pooled item is at least as relevant as every item left out
        let worst_in = s.pool.iter().map(|&i| s.scores[i]).fold(f64::NEG_INFINITY, f64::max);
        for i in (0..past.len()).filter(|i| !s.pool.contains(i)) {
            prop_assert!(s.scores[i] >= worst_in);
        }
    }

    #[test]
    fn random_sample_is_sorted_and_distinct(n in 0usize..50, k in 0usize..60, seed in any::<u64>()) {
        let v = random_sample(n, k, seed);
        prop_assert_eq!(v.len(), k.min(n));
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(v, random_sample(n, k, seed));
    }

    #[test]
    fn kmedoids_never_worse_than_its_start(rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 9), 2..9), k in 1usize..4) {
        let n = rows.len();
        let k = k.min(n);
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                m[i][j] = rows[i][j];
                m[j][i] = rows[i][j];
            }
        }
        let cl = kmedoids(&DistMatrix::from_rows(&m).unwrap(), k, &KMedoidsConfig::default()).unwrap();
        prop_assert!(cl.cost_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!(cl.total_cost <= cl.cost_trace[0] + 1e-9);
        prop_assert!(common::swap_optimal(&m, &cl.medoids, 1e-9));
    }

    #[test]
    fn weighted_accuracy_lies_between_extremes(finals in prop::collection::vec((0.0f64..=1.0, 1usize..50), 1..6)) {
        let k = finals.len();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| (j + 1 >= i).then_some(if j + 1 == k { finals[i].0 } else { 0.5 })).collect())
            .collect();
        let m = AccMatrix::from_rows(rows, finals.iter().map(|f| f.1).collect(), vec![0.0; k]).unwrap();
        let lo = finals.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
        let hi = finals.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
        let w = m.acc_w().unwrap();
        prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
        let back = AccMatrix::from_csv(&m.to_csv()).unwrap();
        prop_assert_eq!(back, m);
    }
}
