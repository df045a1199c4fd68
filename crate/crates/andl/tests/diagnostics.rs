use ivnsim_andl::{compile_source, parse, validate, CompileOptions, Diagnostic, Pos};

const BASE: &str = r#"
network n {
  devices {
    canLink cb1;
    node a;
    node b;
    node c;
    node e1;
    node e2;
    switch s;
    gateway g;
  }
  connections {
    segment bus {
      a <--> cb1;
      b <--> cb1;
      c <--> cb1;
      g <--> cb1;
    }
    segment eth {
      e1 <--> s;
      e2 <--> s;
      g <--> s;
    }
  }
  communication {
    MESSAGES
  }
}
"#;

fn with(messages: &str) -> String {
    BASE.replace("MESSAGES", messages)
}

fn errors(text: &str) -> Vec<Diagnostic> {
    let (file, mut diags) = parse(text);
    diags.extend(validate(&file, &CompileOptions::default()));
    diags.into_iter().filter(Diagnostic::is_error).collect()
}

fn assert_error(text: &str, needle: &str) {
    let errs = errors(text);
    assert!(errs.iter().any(|d| d.message.contains(needle)), "no `{needle}` in {errs:#?}");
}

#[test]
fn empty_network_is_valid() {
    let (cfg, diags) = compile_source("network n { devices { } connections { } communication { } }", &Default::default())
        .unwrap();
    assert!(diags.is_empty());
    assert!(cfg.messages.is_empty());
}

#[test]
fn missing_semicolon_points_at_next_token() {
    let (_, diags) = parse("network n {\n  devices {\n    node x\n    node y;\n  }\n}");
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].pos, Pos { line: 4, col: 5 });
    assert!(diags[0].message.contains("expected `;`"));
}

#[test]
fn parser_reports_several_errors() {
    let (_, diags) = parse("network n {\n devices {\n node x\n node y;\n bogus z;\n node w;\n }\n}");
    assert!(diags.len() >= 2, "{diags:?}");
}

#[test]
fn can_payload_limit() {
    let t = with("message m { sender a; receivers b; payload 9B; period 1ms; mapping { bus: can{id 1;}; } }");
    assert_error(&t, "CAN payload exceeds 8 bytes");
}

#[test]
fn duplicate_can_id_on_bus() {
    let t = with(
        "message m1 { sender a; receivers b; payload 2B; period 1ms; mapping { bus: can{id 37;}; } }
         message m2 { sender c; receivers b; payload 2B; period 1ms; mapping { bus: can{id 37;}; } }",
    );
    assert_error(&t, "duplicate CAN id 37");
}

#[test]
fn unknown_devices() {
    let t = with("message m { sender zz; receivers b; payload 2B; period 1ms; mapping { bus: can{id 1;}; } }");
    assert_error(&t, "unknown sender `zz`");
}

#[test]
fn missing_segment_mapping() {
    let t = with("message m { sender a; receivers e1; payload 2B; period 1ms; mapping { bus: can{id 1;}; g; } }");
    assert_error(&t, "no mapping for segment `eth`");
}

#[test]
fn gateway_on_path_must_be_listed() {
    let t = with(
        "message m { sender a; receivers e1; payload 2B; period 1ms; mapping { bus: can{id 1;}; eth: be{priority 1;}; } }",
    );
    assert_error(&t, "gateway `g` is on the path");
}

#[test]
fn bare_entry_must_be_gateway() {
    let t = with("message m { sender e1; receivers e2; payload 2B; period 1ms; mapping { eth: be{priority 1;}; s; } }");
    assert_error(&t, "must name a gateway");
}

#[test]
fn off_path_gateway_is_flagged() {
    let t = with("message m { sender e1; receivers e2; payload 2B; period 1ms; mapping { eth: be{priority 1;}; g; } }");
    assert_error(&t, "not on its path");
}

#[test]
fn unreachable_receiver() {
    let text = r#"network n {
      devices { node a; node b; switch s; }
      connections { segment eth { a <--> s; } }
      communication { message m { sender a; receivers b; payload 2B; period 1ms; mapping { eth: be{priority 1;}; } } }
    }"#;
    assert_error(text, "unreachable");
}

#[test]
fn avb_reservation_cap() {
    // 1500 B every 100 us is about 123 Mbit/s.
    let t = with("message m { sender e1; receivers e2; payload 1500B; period 100us; mapping { eth: avb{id 1;}; } }");
    assert_error(&t, "exceeds 75%");
}

#[test]
fn infeasible_schedule_is_reported() {
    let mut msgs = String::new();
    for i in 0..12 {
        msgs += &format!(
            "message m{i} {{ sender e1; receivers e2; payload 1500B; period 1ms; mapping {{ eth: tt{{ctID {i};}}; }} }}\n"
        );
    }
    assert_error(&with(&msgs), "TDMA schedule");
}

#[test]
fn unknown_type_and_parameter() {
    let t = "network n { devices { node a extends std.Nope; switch s { speed 3; } } connections { } communication { } }";
    assert_error(t, "unknown type `std.Nope`");
    assert_error(t, "unknown parameter `speed`");
}

#[test]
fn extends_chain_merges_parameters() {
    let text = r#"
      types std {
        ethernetLink Base { bandwidth 10Mb/s; }
        ethernetLink Fast extends Base { bandwidth 1Gb/s; }
      }
      network n {
        devices { node a; node b; ethernetLink l extends std.Fast; }
        connections { segment eth { a <--> l <--> b; } }
        communication { }
      }"#;
    let (cfg, _) = compile_source(text, &Default::default()).unwrap();
    assert_eq!(cfg.links[0].rate, 1_000_000_000);
}

#[test]
fn duplicate_ct_id_across_messages() {
    let t = with(
        "message m1 { sender e1; receivers e2; payload 46B; period 1ms; mapping { eth: tt{ctID 5;}; } }
         message m2 { sender e2; receivers e1; payload 46B; period 1ms; mapping { eth: tt{ctID 5;}; } }",
    );
    assert_error(&t, "ctID 5");
}
