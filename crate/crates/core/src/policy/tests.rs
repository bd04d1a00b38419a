use super::*;
use crate::fixed::Fixed4;

pub(crate) const OWNER_RULE: &str = r#"
forbid (
    principal in Role::"Agent",
    action == Action::"UpdateOperatingStatus",
    resource
)
when {
    context.time_since_owner_update < 3600 &&
    context.trust_score < 0.8
};
"#;

fn request(role: Role, action: &str, trust: i64, since: i64) -> EvaluationRequest {
    let mut context = BTreeMap::new();
    context.insert("time_since_owner_update".to_string(), Value::Int(since));
    context.insert("trust_score".to_string(), Value::Dec(Fixed4::from_raw(trust)));
    EvaluationRequest {
        principal: Principal { actor_id: ActorId::new("agent-1"), role },
        action: action.to_string(),
        resource: ResourceRef { entity_id: EntityId::new("store-1"), entity_type: "Store".into() },
        context,
    }
}

#[test]
fn owner_rule_parses_to_single_forbid_with_conjunction() {
    let ps = PolicySet::parse(OWNER_RULE).unwrap();
    assert_eq!(ps.rules.len(), 1);
    let rule = &ps.rules[0];
    assert_eq!(rule.effect, Effect::Forbid);
    assert_eq!(rule.rule_id, "policy0");
    assert_eq!(rule.principal, NameConstraint::In(vec!["Agent".into()]));
    assert_eq!(rule.action, NameConstraint::Eq("UpdateOperatingStatus".into()));
    assert_eq!(rule.resource, ResourceConstraint::Any);
    match rule.condition.as_ref().unwrap() {
        Expr::And(l, r) => {
            assert_eq!(
                **l,
                Expr::Cmp(
                    CmpOp::Lt,
                    Box::new(Expr::Attr("time_since_owner_update".into())),
                    Box::new(Expr::Lit(Value::Int(3600)))
                )
            );
            assert_eq!(
                **r,
                Expr::Cmp(
                    CmpOp::Lt,
                    Box::new(Expr::Attr("trust_score".into())),
                    Box::new(Expr::Lit(Value::Dec(Fixed4::from_raw(8000))))
                )
            );
        }
        other => panic!("expected conjunction, got {other:?}"),
    }
}

#[test]
fn empty_source_has_no_rules() {
    assert!(PolicySet::parse("").unwrap().rules.is_empty());
    assert!(PolicySet::parse("  // only a comment\n").unwrap().rules.is_empty());
}

#[test]
fn incompatible_literal_comparison_is_type_error() {
    let err = PolicySet::parse(r#"forbid (principal, action, resource) when { "a" < 3 };"#).unwrap_err();
    assert!(matches!(err, ParseError::Type { line: 1, .. }), "{err:?}");
    for src in [
        r#"forbid (principal, action, resource) when { "a" < "b" };"#,
        r#"forbid (principal, action, resource) when { 3 };"#,
        r#"forbid (principal, action, resource) when { 1 && true };"#,
        r#"forbid (principal, action, resource) when { (1 < 2) < 3 };"#,
        r#"forbid (principal, action, resource) when { true == 1 };"#,
    ] {
        assert!(matches!(PolicySet::parse(src), Err(ParseError::Type { .. })), "{src}");
    }
}

#[test]
fn syntax_errors_carry_position() {
    let err = PolicySet::parse("permit (\n  principal,\n  action\n  resource\n);").unwrap_err();
    assert_eq!(err, ParseError::Syntax { line: 4, col: 3, message: "expected `,`".into() });
    assert!(matches!(PolicySet::parse("allow (principal, action, resource);"), Err(ParseError::Syntax { .. })));
    assert!(matches!(PolicySet::parse("permit (principal, action, resource)"), Err(ParseError::Syntax { .. })));
    assert!(matches!(
        PolicySet::parse(
            "@id(\"a\") permit (principal, action, resource); @id(\"a\") forbid (principal, action, resource);"
        ),
        Err(ParseError::DuplicateRuleId(_))
    ));
}

fn with_permit() -> PolicySet {
    PolicySet::parse(&format!("{OWNER_RULE}\n@id(\"allow-all\")\npermit (principal, action, resource);")).unwrap()
}

#[test]
fn low_trust_agent_after_recent_owner_update_is_rejected() {
    let d = evaluate(&with_permit(), &request(Role::VerifiedAgent, "UpdateOperatingStatus", 6000, 900)).unwrap();
    assert_eq!(d.outcome, Outcome::Reject);
    assert_eq!(d.explanation, vec!["policy0".to_string(), "allow-all".to_string()]);
    assert!(d.evaluated_rules[0].matched);
    assert!(explain(&d).contains("forbid policy0"));
}

#[test]
fn trusted_agent_is_approved() {
    let d = evaluate(&with_permit(), &request(Role::VerifiedAgent, "UpdateOperatingStatus", 9000, 900)).unwrap();
    assert_eq!(d.outcome, Outcome::Approve);
    assert!(!d.evaluated_rules[0].matched);
    assert_eq!(d.explanation, vec!["allow-all".to_string()]);
    assert!(explain(&d).contains("permit allow-all"));
}

#[test]
fn boundaries_of_owner_rule() {
    let ps = with_permit();
    let out = |trust, since| {
        evaluate(&ps, &request(Role::UnverifiedAgent, "UpdateOperatingStatus", trust, since)).unwrap().outcome
    };
    assert_eq!(out(7999, 3599), Outcome::Reject);
    assert_eq!(out(8000, 3599), Outcome::Approve);
    assert_eq!(out(7999, 3600), Outcome::Approve);
    // Humans and other actions are outside the rule head.
    let d = evaluate(&ps, &request(Role::Human, "UpdateOperatingStatus", 0, 0)).unwrap();
    assert_eq!(d.outcome, Outcome::Approve);
    let d = evaluate(&ps, &request(Role::VerifiedAgent, "UpdateMetric", 0, 0)).unwrap();
    assert_eq!(d.outcome, Outcome::Approve);
}

#[test]
fn empty_policy_set_denies() {
    let d = evaluate(&PolicySet::empty(), &request(Role::Human, "UpdateMetric", 9000, 0)).unwrap();
    assert_eq!(d.outcome, Outcome::Reject);
    assert!(d.explanation.is_empty());
    assert!(explain(&d).contains("default deny"));
}

#[test]
fn precedence_truth_table() {
    for mask in 0..8u8 {
        let (esc, forbid, permit) = (mask & 4 != 0, mask & 2 != 0, mask & 1 != 0);
        let src = format!(
            "escalate (principal, action, resource) when {{ {esc} }};\n\
             forbid (principal, action, resource) when {{ {forbid} }};\n\
             permit (principal, action, resource) when {{ {permit} }};"
        );
        let ps = PolicySet::parse(&src).unwrap();
        let d = evaluate(&ps, &request(Role::Human, "UpdateMetric", 0, 0)).unwrap();
        let expected = if esc {
            Outcome::Escalate
        } else if forbid {
            Outcome::Reject
        } else if permit {
            Outcome::Approve
        } else {
            Outcome::Reject
        };
        assert_eq!(d.outcome, expected, "mask {mask:03b}");
        assert_eq!(d.evaluated_rules.len(), 3);
    }
}

#[test]
fn escalate_explanation_names_rule_and_annotation() {
    let ps = PolicySet::parse(
        r#"@id("human-review") @reason("terminations need an operator")
           escalate (principal, action == Action::"TerminateInstance", resource);"#,
    )
    .unwrap();
    let d = evaluate(&ps, &request(Role::VerifiedAgent, "TerminateInstance", 0, 0)).unwrap();
    assert_eq!(d.outcome, Outcome::Escalate);
    let text = explain(&d);
    assert!(text.contains("escalate human-review"));
    assert!(text.contains("terminations need an operator"));
}

#[test]
fn missing_attribute_is_hard_error() {
    let ps = PolicySet::parse("forbid (principal, action, resource) when { context.nope > 1 };").unwrap();
    let err = evaluate(&ps, &request(Role::Human, "UpdateMetric", 0, 0)).unwrap_err();
    assert_eq!(err, EvalError::MissingAttribute { rule_id: "policy0".into(), attribute: "nope".into() });
    // Head mismatch means the condition is never consulted.
    let ps =
        PolicySet::parse("forbid (principal == Role::\"Automation\", action, resource) when { context.nope > 1 };")
            .unwrap();
    assert!(evaluate(&ps, &request(Role::Human, "UpdateMetric", 0, 0)).is_ok());
}

#[test]
fn runtime_type_mismatch() {
    let ps =
        PolicySet::parse("forbid (principal, action, resource) when { context.trust_score == \"high\" };").unwrap();
    assert!(matches!(evaluate(&ps, &request(Role::Human, "X", 0, 0)), Err(EvalError::TypeMismatch { .. })));
}

#[test]
fn head_forms() {
    let ps = PolicySet::parse(
        r#"permit (principal in [Role::"Human", "Automation"], action in [Action::"ScaleCluster"], resource is Cluster);
           permit (principal == "VerifiedAgent", action, resource == Entity::"store-1");"#,
    )
    .unwrap();
    let mut req = request(Role::Automation, "ScaleCluster", 0, 0);
    req.resource.entity_type = "Cluster".into();
    assert_eq!(evaluate(&ps, &req).unwrap().explanation, vec!["policy0".to_string()]);
    let req = request(Role::VerifiedAgent, "UpdateMetric", 0, 0);
    assert_eq!(evaluate(&ps, &req).unwrap().explanation, vec!["policy1".to_string()]);
    // `==` is exact: the "Agent" group only works with `in`.
    let ps = PolicySet::parse(r#"permit (principal == Role::"Agent", action, resource);"#).unwrap();
    assert_eq!(evaluate(&ps, &req).unwrap().outcome, Outcome::Reject);
}

#[test]
fn display_round_trips() {
    let src = format!(
        "{OWNER_RULE}\n@reason(\"say \\\"hi\\\"\")\nescalate (principal, action, resource) when {{ !(context.x == \"a\\\\b\") || context.y >= -2 }};\npermit (principal in [Role::\"Human\", Role::\"Automation\"], action, resource is Store);"
    );
    let ps = PolicySet::parse(&src).unwrap();
    let again = PolicySet::parse(&ps.to_string()).unwrap();
    assert_eq!(ps.rules, again.rules);
}

#[test]
fn evaluation_is_pure() {
    let ps = with_permit();
    let req = request(Role::VerifiedAgent, "UpdateOperatingStatus", 6000, 900);
    assert_eq!(evaluate(&ps, &req).unwrap(), evaluate(&ps, &req).unwrap());
}
