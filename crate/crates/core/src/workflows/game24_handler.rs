use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::game24::{
    check_answer, fmt_num, fmt_nums, parse_num, reconstruct, solve_numbers, target, ArithOp,
    Equation, Num, SolveState,
};
use super::tot::{tree_of_thoughts, TotParams};
use super::{EXPAND, INIT, SCORE, VALIDATE};
use crate::effects::{Context, Handler, HandlerFrame};
use crate::error::{Error, Result};
use crate::llm::{complete, MockRule};
use crate::runtime::{async_, FutureHandle, Task};
use crate::value::{Args, Value};

const PROPOSE_HEADER: &str = "Propose possible next steps toward 24.";
const VALUE_HEADER: &str = "Evaluate if the given numbers can reach 24 (sure/likely/impossible).";
const VALIDATE_HEADER: &str = "Write a single expression that reaches 24 from the steps below.";

pub fn propose_prompt(state: &SolveState) -> String {
    format!(
        "{PROPOSE_HEADER}\nCombine two of the numbers with one of + - * / per step, one step per \
         line, written as \"a op b = c (left: ...)\".\nInput: {}\nPossible next steps:",
        fmt_nums(&state.remaining)
    )
}

pub fn value_prompt(remaining: &[Num]) -> String {
    format!(
        "{VALUE_HEADER}\nInput: {}\nEnd with one word on the last line.",
        fmt_nums(remaining)
    )
}

pub fn validate_prompt(state: &SolveState) -> String {
    let input: Vec<String> = state.input.iter().map(i64::to_string).collect();
    format!(
        "{VALIDATE_HEADER}\nUse each input number exactly once.\nInput: {}\nSteps:\n{}\nAnswer:",
        input.join(" "),
        state.equations.join("\n")
    )
}

/// Value of one evaluation label; anything unrecognized counts as impossible.
pub fn label_value(text: &str) -> f64 {
    let last = text
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .unwrap_or("")
        .to_lowercase();
    let words: Vec<&str> = last
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .collect();
    if words.contains(&"impossible") {
        0.001
    } else if words.contains(&"sure") {
        20.0
    } else if words.contains(&"likely") {
        1.0
    } else {
        0.001
    }
}

/// Successor states for every valid step proposed in `text`.
pub fn parse_proposals(state: &SolveState, text: &str) -> Vec<SolveState> {
    text.lines()
        .filter_map(Equation::parse)
        .filter_map(|eq| state.apply(&eq))
        .collect()
}

pub fn state_value(s: SolveState) -> Value {
    Value::any(s)
}

pub fn as_state(v: &Value) -> Result<&SolveState> {
    v.downcast::<SolveState>()
        .ok_or_else(|| Error::bad_arg("game24", format!("expected a solve state, got {}", v.type_name())))
}

type ScoreCache = Rc<RefCell<HashMap<(Vec<Num>, usize), FutureHandle>>>;

/// Implements `init`, `expand`, `score` and `validate` for the Game of 24
/// with `complete` calls.
///
/// Scores are cached by remaining numbers, so equal multisets reached along
/// different paths share one set of evaluation calls.
#[derive(Default)]
pub struct Game24Handler {
    cache: ScoreCache,
}

impl Game24Handler {
    pub fn new() -> Self {
        Self::default()
    }
}

fn ready_list(ctx: &Context, states: Vec<SolveState>) -> Result<Value> {
    let list = Value::List(states.into_iter().map(state_value).collect());
    Ok(Value::Future(async_(ctx, Task::ready(list), None)?))
}

fn expand(ctx: &Context, state: &SolveState) -> Result<Value> {
    if state.answer.is_some() || state.remaining.is_empty() {
        return ready_list(ctx, vec![]);
    }
    if state.remaining.len() == 1 {
        // Final step: turn a finished state into a validated answer.
        if state.remaining[0] != target() {
            return ready_list(ctx, vec![]);
        }
        let fut = complete(ctx, &validate_prompt(state))?;
        let state = state.clone();
        let task = Task::from_future(async move {
            let text = fut.await?.render();
            let found = match check_answer(&text, &state.input) {
                Ok(answer) => vec![state_value(SolveState {
                    answer: Some(answer),
                    ..state
                })],
                Err(Error::ValidationFailed(_)) => vec![],
                Err(e) => return Err(e),
            };
            Ok(Value::List(found))
        });
        return Ok(Value::Future(async_(ctx, task, None)?));
    }
    let fut = complete(ctx, &propose_prompt(state))?;
    let state = state.clone();
    let task = Task::from_future(async move {
        let text = fut.await?.render();
        Ok(Value::List(
            parse_proposals(&state, &text).into_iter().map(state_value).collect(),
        ))
    });
    Ok(Value::Future(async_(ctx, task, None)?))
}

fn score(ctx: &Context, cache: &ScoreCache, state: &SolveState, n_eval: usize) -> Result<Value> {
    let key = (state.remaining_key(), n_eval);
    if let Some(f) = cache.borrow().get(&key) {
        return Ok(Value::Future(f.clone()));
    }
    let prompt = value_prompt(&state.remaining);
    let calls = (0..n_eval)
        .map(|_| complete(ctx, &prompt))
        .collect::<Result<Vec<_>>>()?;
    let task = Task::from_future(async move {
        let mut total = 0.0;
        for f in calls {
            total += label_value(&f.await?.render());
        }
        Ok(Value::Float(total))
    });
    let fut = async_(ctx, task, None)?;
    cache.borrow_mut().insert(key, fut.clone());
    Ok(Value::Future(fut))
}

fn validate(ctx: &Context, state: &SolveState) -> Result<Value> {
    if state.remaining.len() != 1 || state.remaining[0] != target() {
        let msg = format!("remaining numbers are {}, not 24", fmt_nums(&state.remaining));
        let task = Task::from_future(async move { Err(Error::ValidationFailed(msg)) });
        return Ok(Value::Future(async_(ctx, task, None)?));
    }
    let fut = complete(ctx, &validate_prompt(state))?;
    let input = state.input.clone();
    let task = Task::from_future(async move {
        let text = fut.await?.render();
        Ok(Value::Str(check_answer(&text, &input)?))
    });
    Ok(Value::Future(async_(ctx, task, None)?))
}

impl Handler for Game24Handler {
    fn into_frame(self) -> HandlerFrame {
        let cache = self.cache;
        HandlerFrame::new("Game24Handler")
            .on(&INIT, |_, args| {
                let list = Args::new("init", args).get(0)?.clone();
                let numbers = list
                    .into_list()
                    .ok_or_else(|| Error::bad_arg("init", "expected a list of integers"))?
                    .iter()
                    .map(|v| v.as_int().ok_or_else(|| Error::bad_arg("init", "expected integers")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(state_value(SolveState::initial(&numbers)?))
            })
            .on(&EXPAND, |ctx, args| {
                expand(ctx, as_state(Args::new("expand", args).get(0)?)?)
            })
            .on(&SCORE, move |ctx, args| {
                let a = Args::new("score", args);
                let n = a.int(1)?;
                if n < 1 {
                    return Err(Error::bad_arg("score", "n_eval must be at least 1"));
                }
                score(ctx, &cache, as_state(a.get(0)?)?, n as usize)
            })
            .on(&VALIDATE, |ctx, args| {
                validate(ctx, as_state(Args::new("validate", args).get(0)?)?)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Game24Outcome {
    pub frontier: Vec<SolveState>,
    pub answer: Option<String>,
}

/// Runs the beam search on four numbers and picks the first validated answer
/// in the final frontier.
pub fn solve_game24(
    ctx: &Context,
    numbers: &[i64],
    params: TotParams,
    mut on_step: impl FnMut(usize, &[SolveState]),
) -> Result<Game24Outcome> {
    let input = Value::List(numbers.iter().map(|n| Value::Int(*n)).collect());
    let to_states = |vs: &[Value]| -> Vec<SolveState> {
        vs.iter().filter_map(|v| as_state(v).ok().cloned()).collect()
    };
    let frontier = tree_of_thoughts(ctx, input, params, |step, f| on_step(step, &to_states(f)))?;
    let frontier = to_states(&frontier);
    let answer = frontier.iter().find_map(|s| s.answer.clone());
    Ok(Game24Outcome { frontier, answer })
}

fn input_numbers(prompt: &str) -> Option<Vec<Num>> {
    let line = prompt.lines().find_map(|l| l.strip_prefix("Input: "))?;
    line.split_whitespace().map(parse_num).collect()
}

/// Deterministic responder that answers the three prompt kinds exactly:
/// every legal step, solvability from exhaustive search, and the expression
/// rebuilt from the steps.
pub fn game24_mock_rule() -> MockRule {
    MockRule::func(|req| {
        let prompt = &req.prompt;
        if prompt.starts_with(PROPOSE_HEADER) {
            let nums = input_numbers(prompt)?;
            let mut lines = vec![];
            for i in 0..nums.len() {
                for j in 0..nums.len() {
                    if i == j {
                        continue;
                    }
                    for op in ArithOp::ALL {
                        let Some(c) = op.apply(nums[i], nums[j]) else {
                            continue;
                        };
                        let mut left: Vec<Num> = (0..nums.len())
                            .filter(|k| *k != i && *k != j)
                            .map(|k| nums[k])
                            .collect();
                        left.push(c);
                        lines.push(format!(
                            "{} {} {} = {} (left: {})",
                            fmt_num(&nums[i]),
                            op.symbol(),
                            fmt_num(&nums[j]),
                            fmt_num(&c),
                            fmt_nums(&left)
                        ));
                    }
                }
            }
            Some(lines.join("\n"))
        } else if prompt.starts_with(VALUE_HEADER) {
            let nums = input_numbers(prompt)?;
            let ok = solve_numbers(&nums).is_some();
            Some(if ok { "sure" } else { "impossible" }.to_owned())
        } else if prompt.starts_with(VALIDATE_HEADER) {
            let input: Vec<i64> = input_numbers(prompt)?
                .iter()
                .map(|n| n.is_integer().then(|| n.to_integer()))
                .collect::<Option<_>>()?;
            let steps = prompt.split_once("Steps:\n")?.1;
            let steps = steps.rsplit_once("\nAnswer:")?.0;
            let state = SolveState {
                input: input.clone(),
                equations: steps.lines().map(str::to_owned).collect(),
                remaining: vec![],
                answer: None,
            };
            let expr = reconstruct(&state)?;
            let value = expr.eval()?;
            Some(format!("{expr} = {}", fmt_num(&value)))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::HandlerStack;
    use crate::llm::{LlmHandler, MockBackend};
    use crate::runtime::{await_, AsyncHandler, ClockKind, SyncHandler};

    fn n(i: i64) -> Num {
        Num::from_integer(i)
    }

    fn with_stack<R>(sync: bool, body: impl FnOnce(&HandlerStack) -> R) -> (R, usize) {
        let stack = HandlerStack::new();
        let backend = MockBackend::new(game24_mock_rule())
            .with_latency(std::time::Duration::from_millis(100));
        let calls = backend.call_counter();
        let out = {
            let _a = if sync {
                stack.push(SyncHandler::with_clock(ClockKind::Virtual)).unwrap()
            } else {
                stack.push(AsyncHandler::with_clock(ClockKind::Virtual)).unwrap()
            };
            let _l = stack.push(LlmHandler::new(backend)).unwrap();
            let _g = stack.push(Game24Handler::new()).unwrap();
            body(&stack)
        };
        (out, calls.get())
    }

    #[test]
    fn labels() {
        assert_eq!(label_value("8 3\n8 * 3 = 24\nsure"), 20.0);
        assert_eq!(label_value("likely"), 1.0);
        assert_eq!(label_value("Impossible."), 0.001);
        assert_eq!(label_value("no idea"), 0.001);
        assert_eq!(label_value(""), 0.001);
    }

    #[test]
    fn proposals_are_filtered() {
        let s = SolveState {
            input: vec![2, 10, 10, 13],
            equations: vec!["10 - 2 = 8".into()],
            remaining: vec![n(10), n(13), n(8)],
            answer: None,
        };
        let out = parse_proposals(&s, "13 - 10 = 3 (left: 8 3)\n13 + 1 = 14\n8 * 10 = 81\nnonsense");
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].remaining, vec![n(8), n(3)]);
        assert_eq!(out[0].equations, ["10 - 2 = 8", "13 - 10 = 3"]);
    }

    #[test]
    fn mock_expansion_enumerates_steps() {
        let (states, _) = with_stack(false, |stack| {
            let s = SolveState {
                input: vec![2, 10, 10, 13],
                equations: vec!["10 - 2 = 8".into(), "13 - 10 = 3".into()],
                remaining: vec![n(8), n(3)],
                answer: None,
            };
            let f = stack.perform(&EXPAND, &[state_value(s)]).unwrap();
            let v = await_(stack, f.as_future().unwrap()).unwrap();
            v.into_list().unwrap()
        });
        // Two ordered pairs, four operators each.
        assert_eq!(states.len(), 8);
        assert!(states
            .iter()
            .any(|v| as_state(v).unwrap().remaining == vec![n(24)]));
    }

    #[test]
    fn score_uses_solvability() {
        let (scores, calls) = with_stack(false, |stack| {
            let mut out = vec![];
            for rem in [vec![n(8), n(3)], vec![n(1), n(1)], vec![n(24)], vec![n(3), n(8)]] {
                let s = SolveState {
                    input: vec![1, 1, 1, 1],
                    equations: vec![],
                    remaining: rem,
                    answer: None,
                };
                let f = stack.perform(&SCORE, &[state_value(s), Value::Int(3)]).unwrap();
                out.push(await_(stack, f.as_future().unwrap()).unwrap().as_float().unwrap());
            }
            out
        });
        assert_eq!(scores, [60.0, 0.003, 60.0, 60.0]);
        // [3, 8] reuses the [8, 3] evaluations.
        assert_eq!(calls, 9);
    }

    #[test]
    fn validate_rejects_unfinished_state() {
        let (r, _) = with_stack(false, |stack| {
            let s = SolveState::initial(&[4, 9, 10, 13]).unwrap();
            let f = stack.perform(&VALIDATE, &[state_value(s)]).unwrap();
            await_(stack, f.as_future().unwrap())
        });
        assert!(matches!(r, Err(Error::ValidationFailed(_))));
    }

    #[test]
    fn worked_example_frontier() {
        let (outcome, _) = with_stack(false, |stack| {
            let mut sizes = vec![];
            let o = solve_game24(stack, &[2, 10, 10, 13], TotParams::default(), |_, f| {
                sizes.push(f.len());
                assert!(f.iter().all(SolveState::is_consistent));
            })
            .unwrap();
            assert!(sizes.iter().all(|s| *s <= 5));
            o
        });
        let answer = outcome.answer.expect("solvable input");
        check_answer(&answer, &[2, 10, 10, 13]).unwrap();
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let (o, calls) = with_stack(false, |stack| {
            let params = TotParams {
                n_steps: 0,
                ..TotParams::default()
            };
            solve_game24(stack, &[4, 9, 10, 13], params, |_, _| {}).unwrap()
        });
        assert_eq!(o.frontier, [SolveState::initial(&[4, 9, 10, 13]).unwrap()]);
        assert_eq!(calls, 0);
    }

    #[test]
    fn unsolvable_input_has_no_answer() {
        let (o, _) = with_stack(false, |stack| {
            solve_game24(stack, &[1, 1, 1, 1], TotParams::default(), |_, _| {}).unwrap()
        });
        assert_eq!(o.answer, None);
    }

    #[test]
    fn sync_and_async_explore_the_same_states() {
        let run = |sync| {
            with_stack(sync, |stack| {
                let mut seen = vec![];
                let o = solve_game24(stack, &[5, 6, 8, 13], TotParams::default(), |_, f| {
                    seen.push(f.to_vec())
                })
                .unwrap();
                (seen, o)
            })
        };
        assert_eq!(run(false), run(true));
    }
}
