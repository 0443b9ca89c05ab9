//! Small models shared by unit tests, doctests and the acceptance suite.

/// The university model: 2 students, 5 courses.
pub const EXAMPLE1: &str = "\
population course = {c1, c2, c3, c4, c5}.
population student = {s1, s2}.
parrv level(course) states {intro, advanced}.
parrv iq(student) states {high, low}.
parrv grade(student, course) states {a, b, c}.
parrv graduates(student) states {yes, no}.
cpd level(_C) ~ [intro:0.4,advanced:0.6].
cpd iq(_S) ~ [high:0.5,low:0.5].
cpd grade(S,C) ~ [a:0.7,b:0.2,c:0.1] :- iq(S,high), level(C,intro).
cpd grade(S,C) ~ [a:0.2,b:0.2,c:0.6] :- iq(S,low), level(C,advanced).
cpd grade(_S,_C) ~ [a:0.3,b:0.4,c:0.3].
cpd graduates(S) ~ [yes:0.2,no:0.8] :- grade(S,_C,c).
cpd graduates(S) ~ [yes:0.5,no:0.5] :- count(C, grade(S,C,a)) < 2.
cpd graduates(_S) ~ [yes:0.9,no:0.1].
";

/// Two zero-parameter RVs: rain -> wet.
pub const RAIN_WET: &str = "\
parrv rain states {y, n}.
parrv wet states {y, n}.
cpd rain ~ [y:0.3,n:0.7].
cpd wet ~ [y:0.9,n:0.1] :- rain(y).
cpd wet ~ [y:0.2,n:0.8].
";
