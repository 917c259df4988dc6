use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cpcfg::chart::Sentence;
use cpcfg::corpus::{read_bracketed, RawTree, Vocab};
use cpcfg::Error;
use sha2::{Digest, Sha256};

use crate::failure::{CmdResult, Failure};

pub fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

pub fn read_trees(path: &Path) -> CmdResult<Vec<RawTree>> {
    read_bracketed(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Whitespace-tokenized lines, lowercased. Empty lines are kept.
pub fn read_sentences(path: &Path) -> CmdResult<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect())
}

/// Maps tokens to ids, counting out-of-vocabulary tokens.
pub fn encode(vocab: &Vocab, tokens: &[String], oov: &mut usize) -> Sentence {
    *oov += tokens.iter().filter(|t| !vocab.contains(t)).count();
    vocab.encode(tokens)
}

pub fn sha256_file(path: &Path) -> CmdResult<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&PathBuf>, contents: &str) -> CmdResult {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .map_err(|e| Failure::internal(format!("writing output: {e}")))
        }
    }
}

pub fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        write_file(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sentences_are_lowercased_and_oov_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        write_file(&p, "The Dog\n\nzebra dog\n").unwrap();
        let lines = read_sentences(&p).unwrap();
        assert_eq!(lines, vec![vec!["the", "dog"], vec![], vec!["zebra", "dog"]]);
        let vocab = Vocab::build(["the", "dog"], 10);
        let mut oov = 0;
        let s = encode(&vocab, &lines[2], &mut oov);
        assert_eq!(oov, 1);
        assert_eq!(s.ids()[0], cpcfg::corpus::UNK_ID);
    }

    #[test]
    fn missing_file_is_input_failure() {
        let f = read_text(Path::new("/no/such/file")).unwrap_err();
        assert_eq!(f.code, crate::failure::EXIT_INPUT);
        assert!(f.message.contains("/no/such/file"));
    }
}
