//! Mini-language for synthetic dataset specs.
//!
//! `blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7` (n is per class) and
//! `ood:d=2,n=500,offset=20,spread=1,seed=12`.

use std::collections::BTreeMap;
use viedl_core::data::{gaussian_blobs, ood_blob, Dataset};
use viedl_core::error::Error;

pub fn parse(spec: &str) -> Result<Dataset, Error> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("synthetic spec '{spec}' missing 'kind:' prefix")))?;
    let mut fields = BTreeMap::new();
    for part in rest.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad spec field '{part}', expected key=value")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get_f64 = |fields: &BTreeMap<String, String>, key: &str| -> Result<f64, Error> {
        fields
            .get(key)
            .ok_or_else(|| Error::Config(format!("synthetic spec missing '{key}'")))?
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("bad value for '{key}': {e}")))
    };
    let get_usize = |fields: &BTreeMap<String, String>, key: &str| -> Result<usize, Error> {
        Ok(get_f64(fields, key)? as usize)
    };
    let ds = match kind {
        "blobs" => {
            let allowed = ["k", "n", "d", "sep", "spread", "seed"];
            check_keys(&fields, &allowed)?;
            gaussian_blobs(
                get_usize(&fields, "k")?,
                get_usize(&fields, "n")?,
                get_usize(&fields, "d")?,
                get_f64(&fields, "sep")?,
                get_f64(&fields, "spread")?,
                get_f64(&fields, "seed")? as u64,
            )?
        }
        "ood" => {
            let allowed = ["d", "n", "offset", "spread", "seed"];
            check_keys(&fields, &allowed)?;
            ood_blob(
                get_usize(&fields, "d")?,
                get_usize(&fields, "n")?,
                get_f64(&fields, "offset")?,
                get_f64(&fields, "spread")?,
                get_f64(&fields, "seed")? as u64,
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown synthetic kind '{other}' (expected 'blobs' or 'ood')"
            )))
        }
    };
    Ok(ds)
}

fn check_keys(fields: &BTreeMap<String, String>, allowed: &[&str]) -> Result<(), Error> {
    for key in fields.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown synthetic spec key '{key}'")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blobs() {
        let ds = parse("blobs:k=3,n=10,d=2,sep=6,spread=1,seed=7").unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.num_classes(), Some(3));
    }

    #[test]
    fn parses_ood() {
        let ds = parse("ood:d=2,n=20,offset=20,spread=1,seed=12").unwrap();
        assert_eq!(ds.len(), 20);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("blobs").is_err());
        assert!(parse("mystery:k=3").is_err());
        assert!(parse("blobs:k=3,n=10,d=2,sep=6,spread=1").is_err()); // missing seed
        assert!(parse("blobs:k=3,n=10,d=2,sep=6,spread=1,seed=7,bogus=1").is_err());
    }
}
