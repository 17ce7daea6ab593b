//! Space-based, information-centric access control. Posts and control
//! messages live in one global fact space; a viewer's view is the set of
//! posts for which `canView` is derivable from the compiled norms, so
//! changing the norm set immediately changes every view. Direct, pull-based,
//! conditional, and transitive (repost) flows all reduce to publishing facts
//! and querying the space.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::logic::{
    evaluate, Atom, BodyAtom, DatalogProgram, Fact, FactSet, LogicError, Rule, Term,
};
use crate::schema::{role_closure, ContextSchema, SchemaError};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("duplicate post id `{0}`")]
    DuplicatePostId(String),
    #[error("unknown post `{0}`")]
    UnknownPost(String),
    #[error("post context `{found}` does not match space context `{expected}`")]
    WrongContext { expected: String, found: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown transmission principle `{0}`")]
    UnknownTp(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("roles `{a}` and `{b}` of actor `{actor}` are disjoint")]
    ConflictingRoles { actor: String, a: String, b: String },
    #[error("`{reposter}` cannot view post `{post_id}`; repost blocked")]
    BlockedRepost { reposter: String, post_id: String },
    #[error("log line with unsupported predicate `{0}`")]
    UnknownLogPredicate(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// A published piece of information with its CI attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub context: String,
    pub post_id: String,
    pub author: String,
    pub subject: String,
    pub attribute: String,
    pub tp: String,
    pub payload: String,
    pub created_at: u64,
    pub reposted_from: Option<String>,
}

impl Post {
    fn to_fact(&self) -> Fact {
        Fact::new(
            "post",
            vec![
                self.context.clone(),
                self.post_id.clone(),
                self.author.clone(),
                self.subject.clone(),
                self.attribute.clone(),
                self.tp.clone(),
            ],
        )
    }
}

/// Optional constraints for `view_query`.
#[derive(Debug, Clone, Default)]
pub struct ViewFilter {
    pub attribute: Option<String>,
    pub author: Option<String>,
    pub subject: Option<String>,
}

/// The global fact space: role assignments, posts, consent facts, and the
/// compiled approved rules that define every viewer's view.
#[derive(Debug, Clone)]
pub struct InformationSpace {
    schema: ContextSchema,
    rules: Vec<Rule>,
    roles: BTreeMap<String, BTreeSet<String>>,
    posts: Vec<Post>,
    post_index: BTreeMap<String, usize>,
    consents: BTreeSet<(String, String)>,
    log: Vec<String>,
}

impl InformationSpace {
    pub fn new(schema: ContextSchema, rules: Vec<Rule>) -> Result<Self, SpaceError> {
        let space = InformationSpace {
            schema,
            rules,
            roles: BTreeMap::new(),
            posts: Vec::new(),
            post_index: BTreeMap::new(),
            consents: BTreeSet::new(),
            log: Vec::new(),
        };
        // Validate the rule set (arity, safety) together with the view layer.
        space.program()?;
        Ok(space)
    }

    /// Swapping the compiled norms is how norm changes reach the views.
    pub fn set_rules(&mut self, rules: Vec<Rule>) -> Result<(), SpaceError> {
        let old = std::mem::replace(&mut self.rules, rules);
        if let Err(e) = self.program() {
            self.rules = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn post(&self, post_id: &str) -> Option<&Post> {
        self.post_index.get(post_id).map(|&i| &self.posts[i])
    }

    /// Grants `actor` a role; the ontology closure is applied and checked
    /// against the disjointness constraints.
    pub fn assign_role(&mut self, actor: &str, role: &str) -> Result<(), SpaceError> {
        if !self.schema.has_role(role) {
            return Err(SpaceError::UnknownRole(role.to_string()));
        }
        let mut base = self.roles.get(actor).cloned().unwrap_or_default();
        base.insert(role.to_string());
        let closed = role_closure(&self.schema.ontology, &base)?;
        for a in &closed {
            for b in &closed {
                if a < b && self.schema.ontology.is_disjoint(a, b) {
                    return Err(SpaceError::ConflictingRoles {
                        actor: actor.to_string(),
                        a: a.clone(),
                        b: b.clone(),
                    });
                }
            }
        }
        self.roles.insert(actor.to_string(), closed);
        self.log.push(format!(
            "{}.",
            Fact::new(
                "inrole",
                vec![
                    self.schema.context_id.clone(),
                    actor.to_string(),
                    role.to_string(),
                ],
            )
        ));
        Ok(())
    }

    fn validate_post_vocabulary(&self, post: &Post) -> Result<(), SpaceError> {
        if post.context != self.schema.context_id {
            return Err(SpaceError::WrongContext {
                expected: self.schema.context_id.clone(),
                found: post.context.clone(),
            });
        }
        if self.schema.attribute(&post.attribute).is_none() {
            return Err(SpaceError::UnknownAttribute(post.attribute.clone()));
        }
        if self.schema.transmission_principle(&post.tp).is_none() {
            return Err(SpaceError::UnknownTp(post.tp.clone()));
        }
        Ok(())
    }

    /// Adds a post to the space. Nothing is sent anywhere; visibility is
    /// decided at query time.
    pub fn publish(
        &mut self,
        post_id: &str,
        author: &str,
        subject: &str,
        attribute: &str,
        tp: &str,
        payload: &str,
    ) -> Result<&Post, SpaceError> {
        let post = Post {
            context: self.schema.context_id.clone(),
            post_id: post_id.to_string(),
            author: author.to_string(),
            subject: subject.to_string(),
            attribute: attribute.to_string(),
            tp: tp.to_string(),
            payload: payload.to_string(),
            created_at: self.posts.len() as u64,
            reposted_from: None,
        };
        self.insert_post(post)
    }

    fn insert_post(&mut self, post: Post) -> Result<&Post, SpaceError> {
        self.validate_post_vocabulary(&post)?;
        if self.post_index.contains_key(&post.post_id) {
            return Err(SpaceError::DuplicatePostId(post.post_id.clone()));
        }
        self.log.push(format!("{}.", post.to_fact()));
        if !post.payload.is_empty() {
            self.log.push(format!(
                "{}.",
                Fact::new("payload", vec![post.post_id.clone(), post.payload.clone()],)
            ));
        }
        if let Some(orig) = &post.reposted_from {
            self.log.push(format!(
                "{}.",
                Fact::new("repost_of", vec![post.post_id.clone(), orig.clone()])
            ));
        }
        self.post_index
            .insert(post.post_id.clone(), self.posts.len());
        self.posts.push(post);
        Ok(self.posts.last().expect("just pushed"))
    }

    /// Publishes a consent control message: `granter` consents to `post_id`.
    /// Conditional flows stay withheld until the post's subject has granted.
    pub fn grant_consent(&mut self, granter: &str, post_id: &str) -> Result<(), SpaceError> {
        if self.post(post_id).is_none() {
            return Err(SpaceError::UnknownPost(post_id.to_string()));
        }
        self.consents
            .insert((granter.to_string(), post_id.to_string()));
        self.log.push(format!(
            "{}.",
            Fact::new(
                "consent",
                vec![
                    self.schema.context_id.clone(),
                    granter.to_string(),
                    post_id.to_string(),
                ],
            )
        ));
        Ok(())
    }

    /// Replies and reposts re-publish under a new author; downstream
    /// visibility is re-decided by the rules against that author.
    pub fn repost(
        &mut self,
        reposter: &str,
        original_post_id: &str,
        new_post_id: &str,
    ) -> Result<&Post, SpaceError> {
        if !self.can_view(reposter, original_post_id)? {
            return Err(SpaceError::BlockedRepost {
                reposter: reposter.to_string(),
                post_id: original_post_id.to_string(),
            });
        }
        let original = self.post(original_post_id).expect("checked by can_view");
        let post = Post {
            context: original.context.clone(),
            post_id: new_post_id.to_string(),
            author: reposter.to_string(),
            subject: original.subject.clone(),
            attribute: original.attribute.clone(),
            tp: original.tp.clone(),
            payload: original.payload.clone(),
            created_at: self.posts.len() as u64,
            reposted_from: Some(original_post_id.to_string()),
        };
        self.insert_post(post)
    }

    /// One `canView` rule per transmission principle; conditional principles
    /// additionally require the subject's consent fact.
    fn view_rules(&self) -> Vec<Rule> {
        let ctx = Term::constant(self.schema.context_id.clone());
        self.schema
            .transmission_principles
            .iter()
            .map(|tp| {
                let head = Atom::new(
                    "canView",
                    vec![
                        ctx.clone(),
                        Term::variable("Viewer"),
                        Term::variable("PostId"),
                    ],
                );
                let mut body = vec![
                    BodyAtom::Pred(Atom::new(
                        "post",
                        vec![
                            ctx.clone(),
                            Term::variable("PostId"),
                            Term::variable("Author"),
                            Term::variable("Subj"),
                            Term::variable("Attr"),
                            Term::constant(tp.id.clone()),
                        ],
                    )),
                    BodyAtom::Pred(Atom::new(
                        "allowed",
                        vec![
                            ctx.clone(),
                            Term::variable("Author"),
                            Term::variable("Viewer"),
                            Term::variable("Subj"),
                            Term::variable("Attr"),
                            Term::constant(tp.id.clone()),
                        ],
                    )),
                ];
                if tp.conditional {
                    body.push(BodyAtom::Pred(Atom::new(
                        "consent",
                        vec![
                            ctx.clone(),
                            Term::variable("Subj"),
                            Term::variable("PostId"),
                        ],
                    )));
                }
                Rule { head, body }
            })
            .collect()
    }

    fn space_facts(&self) -> Vec<Fact> {
        let ctx = &self.schema.context_id;
        let mut facts = Vec::new();
        for (actor, roles) in &self.roles {
            for role in roles {
                facts.push(Fact::new(
                    "inrole",
                    vec![ctx.clone(), actor.clone(), role.clone()],
                ));
            }
        }
        for post in &self.posts {
            facts.push(post.to_fact());
        }
        for (granter, post_id) in &self.consents {
            facts.push(Fact::new(
                "consent",
                vec![ctx.clone(), granter.clone(), post_id.clone()],
            ));
        }
        facts
    }

    fn program(&self) -> Result<DatalogProgram, SpaceError> {
        let mut rules = self.rules.clone();
        rules.extend(self.view_rules());
        Ok(DatalogProgram::new(self.space_facts(), rules)?)
    }

    /// The derived second view: evaluate once and read the `canView` facts.
    fn fixpoint(&self) -> Result<FactSet, SpaceError> {
        Ok(evaluate(&self.program()?))
    }

    /// True iff the viewer's view contains the post.
    pub fn can_view(&self, viewer: &str, post_id: &str) -> Result<bool, SpaceError> {
        if self.post(post_id).is_none() {
            return Err(SpaceError::UnknownPost(post_id.to_string()));
        }
        let fixpoint = self.fixpoint()?;
        Ok(fixpoint.contains(
            "canView",
            &[
                self.schema.context_id.clone(),
                viewer.to_string(),
                post_id.to_string(),
            ],
        ))
    }

    /// Every post the viewer may see, intersected with the filter, in
    /// publication order. Realizes both direct flow (polling an author's
    /// posts) and pull-based implicit flow (search).
    pub fn view_query(&self, viewer: &str, filter: &ViewFilter) -> Result<Vec<&Post>, SpaceError> {
        let fixpoint = self.fixpoint()?;
        let ctx = &self.schema.context_id;
        Ok(self
            .posts
            .iter()
            .filter(|p| {
                fixpoint.contains(
                    "canView",
                    &[ctx.clone(), viewer.to_string(), p.post_id.clone()],
                )
            })
            .filter(|p| {
                filter.attribute.as_ref().is_none_or(|a| p.attribute == *a)
                    && filter.author.as_ref().is_none_or(|a| p.author == *a)
                    && filter.subject.as_ref().is_none_or(|s| p.subject == *s)
            })
            .collect())
    }

    /// The append-only fact log; replaying it reconstructs the space.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for line in &self.log {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Reconstructs a space from its log. Structural validity is re-checked;
    /// repost view rights are not re-adjudicated (they were checked when the
    /// repost was appended).
    pub fn replay(
        schema: ContextSchema,
        rules: Vec<Rule>,
        log_text: &str,
    ) -> Result<Self, SpaceError> {
        let mut space = InformationSpace::new(schema, rules)?;
        let parsed = crate::logic::parse_program(log_text)?;
        if !parsed.rules().is_empty() {
            return Err(SpaceError::UnknownLogPredicate(":-".to_string()));
        }
        for fact in parsed.facts() {
            match (fact.predicate.as_str(), fact.args.len()) {
                ("inrole", 3) => {
                    if fact.args[0] != space.schema.context_id {
                        return Err(SpaceError::WrongContext {
                            expected: space.schema.context_id.clone(),
                            found: fact.args[0].clone(),
                        });
                    }
                    space.assign_role(&fact.args[1], &fact.args[2])?;
                }
                ("post", 6) => {
                    let post = Post {
                        context: fact.args[0].clone(),
                        post_id: fact.args[1].clone(),
                        author: fact.args[2].clone(),
                        subject: fact.args[3].clone(),
                        attribute: fact.args[4].clone(),
                        tp: fact.args[5].clone(),
                        payload: String::new(),
                        created_at: space.posts.len() as u64,
                        reposted_from: None,
                    };
                    space.insert_post(post)?;
                }
                ("payload", 2) => {
                    let idx = *space
                        .post_index
                        .get(&fact.args[0])
                        .ok_or_else(|| SpaceError::UnknownPost(fact.args[0].clone()))?;
                    space.posts[idx].payload = fact.args[1].clone();
                    space.log.push(format!("{fact}."));
                }
                ("repost_of", 2) => {
                    if space.post(&fact.args[1]).is_none() {
                        return Err(SpaceError::UnknownPost(fact.args[1].clone()));
                    }
                    let idx = *space
                        .post_index
                        .get(&fact.args[0])
                        .ok_or_else(|| SpaceError::UnknownPost(fact.args[0].clone()))?;
                    space.posts[idx].reposted_from = Some(fact.args[1].clone());
                    space.log.push(format!("{fact}."));
                }
                ("consent", 3) => {
                    if fact.args[0] != space.schema.context_id {
                        return Err(SpaceError::WrongContext {
                            expected: space.schema.context_id.clone(),
                            found: fact.args[0].clone(),
                        });
                    }
                    space.grant_consent(&fact.args[1], &fact.args[2])?;
                }
                (other, _) => return Err(SpaceError::UnknownLogPredicate(other.to_string())),
            }
        }
        Ok(space)
    }
}
