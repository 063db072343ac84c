//! Line-delimited stream files.
//!
//! One token per line, `#` starts a comment line, blank lines are skipped.
//! When every token is a positive integer the integers are used as urn
//! labels directly; otherwise all tokens are dictionary-encoded to dense
//! 1-based ids in order of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::urn::Stream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub stream: Stream,
    /// `dictionary[id - 1]` is the token mapped to `id`; `None` for integer input.
    pub dictionary: Option<Vec<String>>,
}

pub fn read_stream<R: BufRead>(reader: R) -> Result<EncodedStream> {
    let mut tokens = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let token = line.trim();
        if token.is_empty() || token.starts_with('#') {
            continue;
        }
        tokens.push(token.to_owned());
    }
    if tokens.is_empty() {
        return Err(Error::EmptyStream);
    }

    let numeric: Option<Vec<u64>> =
        tokens.iter().map(|t| t.parse::<u64>().ok().filter(|&v| v > 0)).collect();
    if let Some(labels) = numeric {
        return Ok(EncodedStream { stream: Stream::new(labels)?, dictionary: None });
    }

    let mut ids: HashMap<&str, u64> = HashMap::new();
    let mut dictionary = Vec::new();
    let labels = tokens
        .iter()
        .map(|t| {
            *ids.entry(t.as_str()).or_insert_with(|| {
                dictionary.push(t.clone());
                dictionary.len() as u64
            })
        })
        .collect();
    Ok(EncodedStream { stream: Stream::new(labels)?, dictionary: Some(dictionary) })
}

/// Writes `header` lines as `# ` comments followed by one label per line.
pub fn write_stream<W: Write>(mut out: W, header: &[String], stream: &Stream) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    for label in stream.labels() {
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// Token↔id pairs, tab-separated, in id order.
pub fn write_dictionary<W: Write>(mut out: W, dictionary: &[String]) -> Result<()> {
    for (i, token) in dictionary.iter().enumerate() {
        writeln!(out, "{token}\t{}", i + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_tokens_pass_through() {
        let e = read_stream("# header\n3\n\n1\n3\n".as_bytes()).unwrap();
        assert_eq!(e.stream.labels(), &[3, 1, 3]);
        assert!(e.dictionary.is_none());
    }

    #[test]
    fn words_are_encoded_in_first_appearance_order() {
        let e = read_stream("the\ncat\nthe\nsat\n0\n".as_bytes()).unwrap();
        assert_eq!(e.stream.labels(), &[1, 2, 1, 3, 4]);
        let dict = e.dictionary.unwrap();
        assert_eq!(dict, vec!["the", "cat", "sat", "0"]);
        let mut buf = Vec::new();
        write_dictionary(&mut buf, &dict).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "the\t1\ncat\t2\nsat\t3\n0\t4\n");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(read_stream("# only a comment\n\n".as_bytes()), Err(Error::EmptyStream)));
    }

    #[test]
    fn write_then_read() {
        let s = Stream::new(vec![4, 4, 9]).unwrap();
        let mut buf = Vec::new();
        write_stream(&mut buf, &["seed=1".into()], &s).unwrap();
        assert_eq!(read_stream(buf.as_slice()).unwrap().stream, s);
    }
}
