use crate::corpus::{is_numeric_token, is_quoted_token, Schema};
use crate::seed::fnv1a;
use crate::sqlrep::name_tokens;

/// Sparse feature vector: sorted, duplicate-free `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures(pub Vec<(u32, f64)>);

impl SparseFeatures {
    fn from_unsorted(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        SparseFeatures(out)
    }

    pub fn get(&self, index: u32) -> f64 {
        self.0
            .binary_search_by_key(&index, |p| p.0)
            .map_or(0.0, |k| self.0[k].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().map(|&(i, v)| (i as usize, v))
    }
}

/// Maps feature names onto `0..dim` by FNV-1a.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHasher {
    dim: usize,
}

impl FeatureHasher {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0 && dim <= u32::MAX as usize, "feature dimension out of range");
        FeatureHasher { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index_of(&self, name: &str) -> u32 {
        (fnv1a(name.as_bytes()) % self.dim as u64) as u32
    }
}

pub const BIAS: &str = "bias";
pub const TABLE_OVERLAP: &str = "ov:table";
pub const COLUMN_OVERLAP: &str = "ov:column";

/// Crude plural folding so that `singers` meets `singer`.
pub fn stem(token: &str) -> &str {
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        &token[..token.len() - 1]
    } else {
        token
    }
}

fn ngram_token(tok: &str) -> &str {
    if is_numeric_token(tok) {
        "<num>"
    } else if is_quoted_token(tok) {
        "<str>"
    } else {
        tok
    }
}

/// Hashed bag of question unigrams and bigrams (literals folded to `<num>`/`<str>`),
/// a bias, and counts of question tokens that match table or column name tokens.
pub fn featurize(nlq: &[String], schema: &Schema, hasher: &FeatureHasher) -> SparseFeatures {
    let mut pairs = Vec::with_capacity(2 * nlq.len() + 3);
    pairs.push((hasher.index_of(BIAS), 1.0));
    let toks: Vec<&str> = nlq.iter().map(|t| ngram_token(t)).collect();
    for t in &toks {
        pairs.push((hasher.index_of(&format!("u:{t}")), 1.0));
    }
    for w in toks.windows(2) {
        pairs.push((hasher.index_of(&format!("b:{} {}", w[0], w[1])), 1.0));
    }
    let table_stems: Vec<String> = schema
        .tables
        .iter()
        .flat_map(|t| name_tokens(t).collect::<Vec<_>>())
        .map(|t| stem(&t).to_string())
        .collect();
    let column_stems: Vec<String> = schema
        .columns
        .iter()
        .flat_map(|c| name_tokens(&c.name).collect::<Vec<_>>())
        .map(|t| stem(&t).to_string())
        .collect();
    let (mut tables, mut columns) = (0.0, 0.0);
    for t in nlq {
        let s = stem(t);
        if table_stems.iter().any(|x| x == s) {
            tables += 1.0;
        }
        if column_stems.iter().any(|x| x == s) {
            columns += 1.0;
        }
    }
    if tables > 0.0 {
        pairs.push((hasher.index_of(TABLE_OVERLAP), tables));
    }
    if columns > 0.0 {
        pairs.push((hasher.index_of(COLUMN_OVERLAP), columns));
    }
    SparseFeatures::from_unsorted(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Column, ColumnType};

    fn singer() -> Schema {
        Schema::new(
            "concert",
            vec!["singer".into()],
            vec![Column { table: 0, name: "name".into(), ty: ColumnType::Text }],
        )
        .unwrap()
    }

    #[test]
    fn deterministic() {
        let h = FeatureHasher::new(1 << 16);
        let q = tokenize("how many singers");
        assert_eq!(featurize(&q, &singer(), &h), featurize(&q, &singer(), &h));
    }

    #[test]
    fn table_overlap_by_hand() {
        let h = FeatureHasher::new(1 << 16);
        let f = featurize(&tokenize("how many singers"), &singer(), &h);
        assert_eq!(f.get(h.index_of(TABLE_OVERLAP)), 1.0);
        assert_eq!(f.get(h.index_of(COLUMN_OVERLAP)), 0.0);
        // bias + 3 unigrams + 2 bigrams + table overlap, assuming no collisions
        assert_eq!(f.0.len(), 7);
    }

    #[test]
    fn no_overlap_no_overlap_features() {
        let h = FeatureHasher::new(1 << 16);
        let f = featurize(&tokenize("what is the weather"), &singer(), &h);
        assert_eq!(f.get(h.index_of(TABLE_OVERLAP)), 0.0);
        assert_eq!(f.get(h.index_of(COLUMN_OVERLAP)), 0.0);
    }

    #[test]
    fn literals_fold() {
        let h = FeatureHasher::new(1 << 16);
        let a = featurize(&tokenize("older than 30"), &singer(), &h);
        let b = featurize(&tokenize("older than 45"), &singer(), &h);
        assert_eq!(a, b);
    }

    #[test]
    fn collisions_accumulate() {
        let h = FeatureHasher::new(1);
        let f = featurize(&tokenize("a b"), &singer(), &h);
        assert_eq!(f.0, vec![(0, 4.0)]);
    }

    #[test]
    fn stemming() {
        assert_eq!(stem("singers"), "singer");
        assert_eq!(stem("class"), "class");
        assert_eq!(stem("has"), "has");
    }
}
