use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// A treebank tree as read from bracketed text. Leaves carry a POS tag and a
/// word; internal nodes carry a label (possibly empty, as in PTB's outer
/// wrapper `( (S ...) )`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RawTree {
    Leaf { tag: String, word: String },
    Node { label: String, children: Vec<RawTree> },
}

impl RawTree {
    pub fn leaf(tag: impl Into<String>, word: impl Into<String>) -> Self {
        RawTree::Leaf {
            tag: tag.into(),
            word: word.into(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<RawTree>) -> Self {
        RawTree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            RawTree::Leaf { tag, .. } => tag,
            RawTree::Node { label, .. } => label,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, RawTree::Leaf { .. })
    }

    /// Words left to right.
    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |_, w| out.push(w));
        out
    }

    /// POS tags left to right.
    pub fn tags(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |t, _| out.push(t));
        out
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            RawTree::Leaf { .. } => 1,
            RawTree::Node { children, .. } => children.iter().map(RawTree::num_leaves).sum(),
        }
    }

    fn visit_leaves<'a>(&'a self, f: &mut dyn FnMut(&'a str, &'a str)) {
        match self {
            RawTree::Leaf { tag, word } => f(tag, word),
            RawTree::Node { children, .. } => children.iter().for_each(|c| c.visit_leaves(f)),
        }
    }
}

/// Canonical single-line form: one space between siblings, none inside
/// brackets.
impl fmt::Display for RawTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawTree::Leaf { tag, word } => write!(f, "({tag} {word})"),
            RawTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<(Token, Pos)> {
    let mut out = Vec::new();
    let mut atom = String::new();
    let mut atom_pos = Pos { line: 1, column: 1 };
    let (mut line, mut column) = (1, 0);
    let flush = |atom: &mut String, pos: Pos, out: &mut Vec<(Token, Pos)>| {
        if !atom.is_empty() {
            out.push((Token::Atom(std::mem::take(atom)), pos));
        }
    };
    for ch in text.chars() {
        column += 1;
        let pos = Pos { line, column };
        match ch {
            '(' | ')' => {
                flush(&mut atom, atom_pos, &mut out);
                out.push((if ch == '(' { Token::Open } else { Token::Close }, pos));
            }
            c if c.is_whitespace() => {
                flush(&mut atom, atom_pos, &mut out);
                if c == '\n' {
                    line += 1;
                    column = 0;
                }
            }
            c => {
                if atom.is_empty() {
                    atom_pos = pos;
                }
                atom.push(c);
            }
        }
    }
    flush(&mut atom, atom_pos, &mut out);
    out
}

fn parse_error(pos: Pos, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: pos.line,
        column: pos.column,
        msg: msg.into(),
    }
}

struct Parser {
    tokens: Vec<(Token, Pos)>,
    at: usize,
}

impl Parser {
    /// Parses one tree; the opening bracket has already been consumed.
    fn tree(&mut self, open: Pos) -> Result<RawTree> {
        let label = match self.tokens.get(self.at) {
            Some((Token::Atom(a), _)) => {
                self.at += 1;
                a.clone()
            }
            Some((Token::Close, _)) => return Err(parse_error(open, "empty tree")),
            Some((Token::Open, _)) => String::new(),
            None => return Err(parse_error(open, "unclosed bracket")),
        };
        let mut children = Vec::new();
        let mut word: Option<String> = None;
        loop {
            let Some((tok, pos)) = self.tokens.get(self.at).cloned() else {
                return Err(parse_error(open, "unclosed bracket"));
            };
            self.at += 1;
            match tok {
                Token::Close => break,
                Token::Open => {
                    if word.is_some() {
                        return Err(parse_error(pos, "leaf has both a word and subtrees"));
                    }
                    children.push(self.tree(pos)?);
                }
                Token::Atom(a) => {
                    if word.is_some() || !children.is_empty() {
                        return Err(parse_error(pos, format!("unexpected token {a:?}")));
                    }
                    word = Some(a);
                }
            }
        }
        match word {
            Some(word) if !label.is_empty() => Ok(RawTree::Leaf { tag: label, word }),
            Some(_) => Err(parse_error(open, "leaf without a tag")),
            None if children.is_empty() => Err(parse_error(open, "node without children")),
            None => Ok(RawTree::Node { label, children }),
        }
    }
}

/// Parses every tree in `text`. Trees may span several lines.
pub fn read_bracketed(text: &str) -> Result<Vec<RawTree>> {
    let mut parser = Parser {
        tokens: tokenize(text),
        at: 0,
    };
    let mut trees = Vec::new();
    while let Some((tok, pos)) = parser.tokens.get(parser.at).cloned() {
        parser.at += 1;
        match tok {
            Token::Open => trees.push(parser.tree(pos)?),
            Token::Close => return Err(parse_error(pos, "unmatched closing bracket")),
            Token::Atom(a) => return Err(parse_error(pos, format!("token {a:?} outside a tree"))),
        }
    }
    Ok(trees)
}

pub fn read_bracketed_file(path: &Path) -> Result<Vec<RawTree>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_bracketed(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_leaf_tree() {
        let src = "(S (NP (DT the) (NN dog)) (VP (VB ran)))";
        let trees = read_bracketed(src).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].num_leaves(), 3);
        assert_eq!(trees[0].words(), vec!["the", "dog", "ran"]);
        assert_eq!(trees[0].tags(), vec!["DT", "NN", "VB"]);
        assert_eq!(trees[0].to_string(), src);
    }

    #[test]
    fn unary_chain_preserved() {
        let t = &read_bracketed("(S (VP (VB run)))").unwrap()[0];
        assert_eq!(t, &RawTree::node("S", vec![RawTree::node("VP", vec![RawTree::leaf("VB", "run")])]));
    }

    #[test]
    fn canonical_whitespace() {
        let src = "( (S\n    (NP (DT the)   (NN dog))\n\t(VP (VB ran)) ) )\n(X (Y z))";
        let trees = read_bracketed(src).unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].to_string(), "( (S (NP (DT the) (NN dog)) (VP (VB ran))))");
        assert_eq!(read_bracketed(&trees[0].to_string()).unwrap()[0], trees[0]);
    }

    #[test]
    fn errors_carry_positions() {
        match read_bracketed("(S (NP") {
            Err(Error::Parse { line: 1, column: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_bracketed("(S (NP (DT a)))\n(S ())") {
            Err(Error::Parse { line: 2, column: 4, msg }) => assert!(msg.contains("empty")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_bracketed("(S (A b)))"), Err(Error::Parse { column: 10, .. })));
        assert!(read_bracketed("word").is_err());
        assert!(read_bracketed("(S)").is_err());
        assert!(read_bracketed("(A b (C d))").is_err());
        assert!(read_bracketed("()").is_err());
        assert_eq!(read_bracketed("  \n").unwrap(), vec![]);
    }
}
