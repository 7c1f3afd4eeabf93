use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser};

use crate::diff::Language;
use crate::repo::{CommitId, FileVersion};

/// A function or method definition, 1-based inclusive lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
    pub rev: CommitId,
    pub path: String,
}

fn grammar(language: Language) -> tree_sitter::Language {
    match language {
        Language::C => tree_sitter_c::LANGUAGE.into(),
        Language::Java => tree_sitter_java::LANGUAGE.into(),
    }
}

fn is_definition(kind: &str, language: Language) -> bool {
    match language {
        Language::C => kind == "function_definition",
        Language::Java => matches!(
            kind,
            "method_declaration" | "constructor_declaration" | "compact_constructor_declaration"
        ),
    }
}

/// Spans of all outermost function definitions in `file`. Definitions nested
/// inside another (local classes, lambdas with bodies) belong to the
/// enclosing one. A failed parse yields no spans.
pub fn extract_function_spans(file: &FileVersion, language: Language) -> Vec<FunctionSpan> {
    spans_in_lines(&file.lines, language)
        .into_iter()
        .map(|(name, start_line, end_line)| FunctionSpan {
            name,
            start_line,
            end_line,
            rev: file.rev.clone(),
            path: file.path.clone(),
        })
        .collect()
}

/// `(name, start, end)` triples for the given source lines.
pub(crate) fn spans_in_lines(lines: &[String], language: Language) -> Vec<(String, usize, usize)> {
    if lines.is_empty() {
        return Vec::new();
    }
    let source = lines.join("\n");
    let mut parser = Parser::new();
    if parser.set_language(&grammar(language)).is_err() {
        return Vec::new();
    }
    let Some(tree) = parser.parse(&source, None) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    collect(tree.root_node(), source.as_bytes(), language, &mut out);
    out
}

fn collect(node: Node, src: &[u8], language: Language, out: &mut Vec<(String, usize, usize)>) {
    if is_definition(node.kind(), language) && !node.is_missing() {
        let start = node.start_position().row + 1;
        let mut end = node.end_position().row + 1;
        if node.end_position().column == 0 && end > start {
            end -= 1;
        }
        out.push((definition_name(node, src, language), start, end));
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect(child, src, language, out);
    }
}

fn definition_name(node: Node, src: &[u8], language: Language) -> String {
    let name_node = match language {
        Language::Java => node.child_by_field_name("name"),
        Language::C => {
            // Descend through pointer and parenthesized declarators.
            let mut d = node.child_by_field_name("declarator");
            while let Some(n) = d {
                if matches!(n.kind(), "identifier" | "field_identifier") {
                    break;
                }
                d = n.child_by_field_name("declarator");
            }
            d
        }
    };
    name_node
        .and_then(|n| n.utf8_text(src).ok())
        .unwrap_or("<anonymous>")
        .to_string()
}
