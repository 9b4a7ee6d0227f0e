use super::*;
use crate::corpus::fixtures::HASH;

fn parse(text: &str) -> SyntaxTree {
    parse_source(text, Language::Python).unwrap()
}

fn cc_of(text: &str) -> u32 {
    let tree = parse(text);
    let def = tree.definitions().into_iter().next().expect("a definition");
    cyclomatic_complexity(def.node).unwrap()
}

fn prov() -> ProvenanceMeta {
    ProvenanceMeta {
        repo: "org/repo".into(),
        commit_hash: HASH.into(),
    }
}

#[test]
fn minimal_function() {
    let tree = parse("def f():\n    return 1\n");
    assert_eq!(tree.root.children.len(), 1);
    let f = &tree.root.children[0];
    assert_eq!(f.kind, NodeKind::FunctionDef);
    assert_eq!(f.name.as_deref(), Some("f"));
    assert_eq!(f.span, Span::new(1, 2));
}

#[test]
fn empty_source() {
    let tree = parse("");
    assert!(tree.root.children.is_empty());
    assert_eq!(tree.line_count(), 0);
}

#[test]
fn class_with_method() {
    let tree = parse("class A:\n    def m(self):\n        pass\n");
    let a = &tree.root.children[0];
    assert_eq!(a.kind, NodeKind::ClassDef);
    assert_eq!(a.children[0].kind, NodeKind::FunctionDef);
    assert_eq!(a.children[0].name.as_deref(), Some("m"));
}

#[test]
fn deterministic_hash_and_tree() {
    let src = "def f(x):\n    if x:\n        return 1\n";
    assert_eq!(parse(src), parse(src));
    assert_eq!(parse(src).source_hash.len(), 64);
}

#[test]
fn syntax_errors_carry_lines() {
    let cases = [
        ("def f():\nreturn 1\n", 2),
        ("x = 1\n    y = 2\n", 2),
        ("if x:\n        a\n    b\n", 3),
        ("def f()\n    pass\n", 1),
        ("def f():\n", 1),
    ];
    for (src, want) in cases {
        match parse_source(src, Language::Python) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, want, "{src:?}"),
            other => panic!("{src:?} -> {other:?}"),
        }
    }
}

#[test]
fn extract_class_and_method() {
    let tree = parse("class A:\n    def m(self):\n        pass\n");
    let units = extract_definitions(&tree, "pkg/a.py", &prov());
    let names: Vec<_> = units.iter().map(|u| (u.qualified_name.as_str(), u.kind)).collect();
    assert_eq!(names, [("A", UnitKind::Class), ("A.m", UnitKind::Method)]);
    assert_eq!(units[1].signature, "def m(self)");
    assert_eq!(units[1].source, "    def m(self):\n        pass");
    assert_eq!(units[1].line_count(), units[1].span.len());
}

#[test]
fn extract_siblings_in_order() {
    let tree = parse("def b():\n    pass\n\ndef a():\n    pass\n");
    let units = extract_definitions(&tree, "m.py", &prov());
    let names: Vec<_> = units.iter().map(|u| u.qualified_name.as_str()).collect();
    assert_eq!(names, ["b", "a"]);
}

#[test]
fn extract_nothing() {
    let tree = parse("x = 1\nprint(x)\n");
    assert!(extract_definitions(&tree, "m.py", &prov()).is_empty());
}

#[test]
fn nested_function_is_function_kind() {
    let tree = parse("def outer():\n    def inner():\n        pass\n    return inner\n");
    let units = extract_definitions(&tree, "m.py", &prov());
    assert_eq!(units[1].qualified_name, "outer.inner");
    assert_eq!(units[1].kind, UnitKind::Function);
}

#[test]
fn multiline_signature_collapsed() {
    let tree = parse("def f(a,\n      b=2) -> int:\n    return a\n");
    let units = extract_definitions(&tree, "m.py", &prov());
    assert_eq!(units[0].signature, "def f(a, b=2) -> int");
}

#[test]
fn node_at_span_smallest_enclosing() {
    let tree = parse("def f():\n    return 1\n");
    assert_eq!(node_at_span(&tree, 2, 2).unwrap().name.as_deref(), Some("f"));
    let tree = parse("class A:\n    def m(self):\n        pass\n");
    assert_eq!(node_at_span(&tree, 2, 3).unwrap().name.as_deref(), Some("m"));
    assert_eq!(node_at_span(&tree, 1, 3).unwrap().name.as_deref(), Some("A"));
    assert_eq!(node_at_span(&tree, 3, 3).unwrap().name.as_deref(), Some("m"));
    assert!(node_at_span(&tree, 10, 12).is_none());
}

#[test]
fn complexity_examples() {
    assert_eq!(cc_of("def f(x):\n    y = x\n    return y\n"), 1);
    assert_eq!(cc_of("def f(x):\n    if x:\n        return 1\n    return 0\n"), 2);
    let src = "def f(x):\n    if x > 1:\n        a = 1\n    elif x < 0:\n        a = 2\n    for i in x:\n        a = i\n    return a\n";
    assert_eq!(cc_of(src), 4);
}

#[test]
fn complexity_counts_boolean_and_ternary_not_else() {
    assert_eq!(cc_of("def f(a, b):\n    return a and b or a\n"), 3);
    assert_eq!(cc_of("def f(a):\n    return 1 if a else 2\n"), 2);
    assert_eq!(cc_of("def f(a):\n    return [x for x in a if x]\n"), 1);
    assert_eq!(
        cc_of("def f(a):\n    try:\n        g()\n    except A:\n        pass\n    except B:\n        pass\n    else:\n        pass\n    finally:\n        pass\n"),
        3
    );
    assert_eq!(cc_of("def f(a):\n    while a:\n        a -= 1\n    else:\n        pass\n"), 2);
}

#[test]
fn complexity_ignores_nested_definitions_and_strings() {
    let src = "def f(a):\n    \"\"\"if and or\"\"\"\n    def g():\n        if a:\n            pass\n    return g\n";
    assert_eq!(cc_of(src), 1);
}

#[test]
fn complexity_rejects_non_definition() {
    let tree = parse("x = 1\n");
    assert!(matches!(cyclomatic_complexity(&tree.root), Err(Error::Domain(_))));
}

#[test]
fn class_bases_read_from_header() {
    let tree = parse("class B(A, pkg.Base, metaclass=M):\n    pass\n");
    assert_eq!(tree.root.children[0].class_bases(), ["A", "pkg.Base"]);
}

#[test]
fn inline_bodies_and_decorators() {
    let tree = parse("@dec\ndef f(): return 1\nclass C: pass\n");
    let units = extract_definitions(&tree, "m.py", &prov());
    assert_eq!(units.len(), 2);
    assert_eq!(units[0].span, Span::new(2, 2));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Stmt {
        Simple(u8),
        If(Vec<Stmt>, Option<Vec<Stmt>>),
        For(Vec<Stmt>),
        While(Vec<Stmt>),
        Def(Vec<Stmt>),
        Class(Vec<Stmt>),
    }

    fn stmt() -> impl Strategy<Value = Stmt> {
        let leaf = (0u8..4).prop_map(Stmt::Simple);
        leaf.prop_recursive(4, 40, 4, |inner| {
            let body = proptest::collection::vec(inner, 1..4);
            prop_oneof![
                (body.clone(), proptest::option::of(body.clone())).prop_map(|(a, b)| Stmt::If(a, b)),
                body.clone().prop_map(Stmt::For),
                body.clone().prop_map(Stmt::While),
                body.clone().prop_map(Stmt::Def),
                body.prop_map(Stmt::Class),
            ]
        })
    }

    fn render(stmts: &[Stmt], depth: usize, counter: &mut usize, out: &mut String) {
        let pad = "    ".repeat(depth);
        for s in stmts {
            match s {
                Stmt::Simple(0) => out.push_str(&format!("{pad}x = 1\n")),
                Stmt::Simple(1) => out.push_str(&format!("{pad}call(a, 'def not_a_def():')\n")),
                Stmt::Simple(2) => out.push_str(&format!("{pad}# comment\n{pad}pass\n")),
                Stmt::Simple(_) => out.push_str(&format!("{pad}return (a +\n{pad}        b)\n")),
                Stmt::If(a, b) => {
                    out.push_str(&format!("{pad}if cond:\n"));
                    render(a, depth + 1, counter, out);
                    if let Some(b) = b {
                        out.push_str(&format!("{pad}else:\n"));
                        render(b, depth + 1, counter, out);
                    }
                }
                Stmt::For(a) => {
                    out.push_str(&format!("{pad}for i in xs:\n"));
                    render(a, depth + 1, counter, out);
                }
                Stmt::While(a) => {
                    out.push_str(&format!("{pad}while w:\n"));
                    render(a, depth + 1, counter, out);
                }
                Stmt::Def(a) => {
                    *counter += 1;
                    out.push_str(&format!("{pad}def f{}(a, b):\n", counter));
                    render(a, depth + 1, counter, out);
                }
                Stmt::Class(a) => {
                    *counter += 1;
                    out.push_str(&format!("{pad}class C{}(Base):\n", counter));
                    render(a, depth + 1, counter, out);
                }
            }
        }
    }

    fn program(stmts: &[Stmt]) -> String {
        let mut out = String::new();
        render(stmts, 0, &mut 0, &mut out);
        out
    }

    fn nested(node: &AstNode) -> bool {
        node.span.start <= node.span.end
            && node
                .children
                .iter()
                .all(|c| node.span.contains(c.span) && nested(c))
    }

    proptest! {
        #[test]
        fn spans_nest(stmts in proptest::collection::vec(stmt(), 1..6)) {
            let src = program(&stmts);
            let tree = parse_source(&src, Language::Python).unwrap();
            prop_assert!(nested(&tree.root), "{}", src);
        }

        #[test]
        fn every_definition_line_yields_one_unit(stmts in proptest::collection::vec(stmt(), 1..6)) {
            let src = program(&stmts);
            let tree = parse_source(&src, Language::Python).unwrap();
            let def_lines: Vec<usize> = src
                .lines()
                .enumerate()
                .filter(|(_, l)| {
                    let t = l.trim_start();
                    t.starts_with("def ") || t.starts_with("class ")
                })
                .map(|(i, _)| i + 1)
                .collect();
            let units = extract_definitions(&tree, "m.py", &prov());
            let starts: Vec<usize> = units.iter().map(|u| u.span.start).collect();
            prop_assert_eq!(starts, def_lines);
        }

        #[test]
        fn adding_an_if_adds_one(body in proptest::collection::vec(stmt(), 1..5)) {
            let mut base = String::from("def target(a, b):\n");
            render(&body, 1, &mut 0, &mut base);
            let mut more = String::from("def target(a, b):\n    if extra:\n        pass\n");
            render(&body, 1, &mut 0, &mut more);
            prop_assert_eq!(cc_of(&more), cc_of(&base) + 1);
        }
    }
}
