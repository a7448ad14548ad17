"""Frozen golden texts for the two worked example problems (op=7 and op=21),
their canonical solutions, and the corresponding retry-augmented solutions."""

EASY_STATEMENT = (
    "The number of each Riverview High's Film Studio equals 5 times as much as the "
    "sum of each Film Studio's Backpack and each Dance Studio's School Daypack. "
    "The number of each Film Studio's School Daypack equals 12 more than the sum of "
    "each Film Studio's Messenger Backpack and each Central High's Film Studio. "
    "The number of each Central High's Film Studio equals the sum of each Dance "
    "Studio's School Daypack and each Film Studio's Messenger Backpack. "
    "The number of each Riverview High's Dance Studio equals the sum of each Film "
    "Studio's Backpack, each Film Studio's Messenger Backpack, each Film Studio's "
    "School Daypack and each Central High's Backpack. "
    "The number of each Dance Studio's School Daypack equals 17. "
    "The number of each Film Studio's Messenger Backpack equals 13."
)

EASY_QUESTION = "How many Backpack does Central High have?"

EASY_SOLUTION = (
    "Define Dance Studio's School Daypack as p; so p = 17. "
    "Define Film Studio's Messenger Backpack as W; so W = 13. "
    "Define Central High's Film Studio as B; so B = p + W = 17 + 13 = 7. "
    "Define Film Studio's School Daypack as g; R = W + B = 13 + 7 = 20; "
    "so g = 12 + R = 12 + 20 = 9. "
    "Define Film Studio's Backpack as w; so w = g + W = 9 + 13 = 22. "
    "Define Central High's Backpack as c; so c = B * w = 7 * 22 = 16. "
    "Answer: 16."
)

EASY_SOLUTION_BODY = EASY_SOLUTION[: -len(" Answer: 16.")]

# retry_rate = 0.5 variant of EASY_SOLUTION (no final Answer sentence in print)
EASY_RETRY_SOLUTION = (
    "Define Dance Studio's School Daypack as p; so p = 17. "
    "Define Film Studio's School Daypack as [BACK]. "
    "Define Film Studio's Messenger Backpack as W; so W = 13. "
    "Define Central High's Classroom as [BACK]. "
    "Define Central High's Backpack as [BACK]. "
    "Define Central High's Film Studio as B; so B = p + W = 17 + 13 = 7. "
    "Define Film Studio's School Daypack as g; R = W + B = 13 + 7 = 20; "
    "so g = 12 + R = 12 + 20 = 9. "
    "Define Riverview High's Dance Studio as [BACK]. "
    "Define Film Studio's Backpack as w; so w = g + W = 9 + 13 = 22. "
    "Define Riverview High's Dance Studio as [BACK]. "
    "Define Central High's Backpack as c; so c = B * w = 7 * 22 = 16."
)

EASY_NECESSARY = (
    "Dance Studio's School Daypack",
    "Film Studio's Messenger Backpack",
    "Central High's Film Studio",
    "Film Studio's School Daypack",
    "Film Studio's Backpack",
    "Central High's Backpack",
)

EASY_OP = 7
EASY_ANSWER = 16

HARD_STATEMENT = (
    "The number of each Jungle Jim's International Market's Cheese equals the sum of "
    "each Parmesan Cheese's Pear and each The Fresh Market's Ice Cream. "
    "The number of each Ice Cream's Pineapple equals 2 more than each Goat Cheese's Grape. "
    "The number of each New Seasons Market's Goat Cheese equals the sum of each "
    "Residential College District's Jungle Jim's International Market, each Jungle Jim's "
    "International Market's Parmesan Cheese and each Residential College District's Supermarket. "
    "The number of each Arts Campus's New Seasons Market equals each Cheese's Pineapple. "
    "The number of each Goat Cheese's Banana equals each Vocational School District's Product. "
    "The number of each Residential College District's Jungle Jim's International Market "
    "equals 5 more than each Ice Cream's Grape. "
    "The number of each Parmesan Cheese's Pineapple equals each Parmesan Cheese's Pear. "
    "The number of each Residential College District's The Fresh Market equals each "
    "Arts Campus's Trader Joe's. "
    "The number of each Arts Campus's Trader Joe's equals each Parmesan Cheese's Ingredient. "
    "The number of each Goat Cheese's Grape equals 0. "
    "The number of each The Fresh Market's Ice Cream equals 13 more than the difference "
    "of each Residential College District's The Fresh Market and each Parmesan Cheese's Grape. "
    "The number of each Goat Cheese's Pineapple equals each New Seasons Market's Product. "
    "The number of each Vocational School District's The Fresh Market equals the sum of "
    "each Trader Joe's's Cheese and each The Fresh Market's Cheese. "
    "The number of each Trader Joe's's Cheese equals 6. "
    "The number of each The Fresh Market's Cheese equals 3. "
    "The number of each Jungle Jim's International Market's Ice Cream equals the "
    "difference of each Ice Cream's Banana and each Goat Cheese's Grape. "
    "The number of each Jungle Jim's International Market's Parmesan Cheese equals each "
    "Ice Cream's Pineapple. "
    "The number of each Parmesan Cheese's Pear equals the difference of each Goat "
    "Cheese's Grape and each Ice Cream's Grape. "
    "The number of each Parmesan Cheese's Grape equals 12 times as much as each "
    "Residential College District's Jungle Jim's International Market. "
    "The number of each The Fresh Market's Parmesan Cheese equals each The Fresh Market's Cheese. "
    "The number of each Ice Cream's Banana equals the sum of each Parmesan Cheese's "
    "Pineapple and each Ice Cream's Pineapple. "
    "The number of each School District's Jungle Jim's International Market equals each "
    "The Fresh Market's Ice Cream. "
    "The number of each Cheese's Pineapple equals 20 more than the sum of each Trader "
    "Joe's's Cheese and each The Fresh Market's Cheese. "
    "The number of each Trader Joe's's Parmesan Cheese equals 16. "
    "The number of each Ice Cream's Pear equals 8. "
    "The number of each Ice Cream's Grape equals each Goat Cheese's Grape."
)

HARD_QUESTION = "How many Product does School District have?"

HARD_SOLUTION = (
    "Define Goat Cheese's Grape as u; so u = 0. "
    "Define Ice Cream's Grape as x; so x = u = 0. "
    "Define Residential College District's Jungle Jim's International Market as N; "
    "so N = 5 + x = 5 + 0 = 5. "
    "Define Parmesan Cheese's Pear as G; so G = u - x = 0 - 0 = 0. "
    "Define Parmesan Cheese's Grape as f; so f = 12 * N = 12 * 5 = 14. "
    "Define Parmesan Cheese's Pineapple as C; so C = G = 0. "
    "Define Parmesan Cheese's Ingredient as Z; e = f + C = 14 + 0 = 14; "
    "so Z = e + G = 14 + 0 = 14. "
    "Define Arts Campus's Trader Joe's as q; so q = Z = 14. "
    "Define Residential College District's The Fresh Market as j; so j = q = 14. "
    "Define Ice Cream's Pineapple as X; so X = 2 + u = 2 + 0 = 2. "
    "Define Ice Cream's Banana as K; so K = C + X = 0 + 2 = 2. "
    "Define The Fresh Market's Ice Cream as P; i = j - f = 14 - 14 = 0; "
    "so P = 13 + i = 13 + 0 = 13. "
    "Define Jungle Jim's International Market's Ice Cream as R; so R = K - u = 2 - 0 = 2. "
    "Define School District's Jungle Jim's International Market as V; so V = P = 13. "
    "Define Jungle Jim's International Market's Cheese as v; so v = G + P = 0 + 13 = 13. "
    "Define Jungle Jim's International Market's Parmesan Cheese as S; so S = X = 2. "
    "Define Jungle Jim's International Market's Product as y; U = S + R = 2 + 2 = 4; "
    "so y = U + v = 4 + 13 = 17. "
    "Define School District's Product as J; so J = V * y = 13 * 17 = 14. "
    "Answer: 14."
)

HARD_SOLUTION_BODY = HARD_SOLUTION[: -len(" Answer: 14.")]

# retry_rate = 0.2 variant of HARD_SOLUTION (no final Answer sentence in print)
HARD_RETRY_SOLUTION = (
    "Define Arts Campus's Ingredient as [BACK]. "
    "Define Vocational School District's Supermarket as [BACK]. "
    "Define Jungle Jim's International Market's Cheese as [BACK]. "
    "Define Goat Cheese's Grape as u; so u = 0. "
    "Define Ice Cream's Grape as x; so x = u = 0. "
    "Define Residential College District's Jungle Jim's International Market as N; "
    "so N = 5 + x = 5 + 0 = 5. "
    "Define New Seasons Market's Product as [BACK]. "
    "Define Parmesan Cheese's Pear as G; so G = u - x = 0 - 0 = 0. "
    "Define Parmesan Cheese's Grape as f; so f = 12 * N = 12 * 5 = 14. "
    "Define Parmesan Cheese's Pineapple as C; so C = G = 0. "
    "Define Parmesan Cheese's Ingredient as Z; e = f + C = 14 + 0 = 14; "
    "so Z = e + G = 14 + 0 = 14. "
    "Define Arts Campus's Trader Joe's as q; so q = Z = 14. "
    "Define Residential College District's The Fresh Market as j; so j = q = 14. "
    "Define Jungle Jim's International Market's Product as [BACK]. "
    "Define Ice Cream's Pineapple as X; so X = 2 + u = 2 + 0 = 2. "
    "Define Ice Cream's Banana as K; so K = C + X = 0 + 2 = 2. "
    "Define The Fresh Market's Ice Cream as P; i = j - f = 14 - 14 = 0; "
    "so P = 13 + i = 13 + 0 = 13. "
    "Define Jungle Jim's International Market's Ice Cream as R; so R = K - u = 2 - 0 = 2. "
    "Define Vocational School District's Supermarket as [BACK]. "
    "Define School District's Jungle Jim's International Market as V; so V = P = 13. "
    "Define New Seasons Market's Ingredient as [BACK]. "
    "Define Jungle Jim's International Market's Cheese as v; so v = G + P = 0 + 13 = 13. "
    "Define Jungle Jim's International Market's Parmesan Cheese as S; so S = X = 2. "
    "Define Jungle Jim's International Market's Product as y; U = S + R = 2 + 2 = 4; "
    "so y = U + v = 4 + 13 = 17. "
    "Define School District's Product as J; so J = V * y = 13 * 17 = 14."
)

HARD_OP = 21
HARD_ANSWER = 14
HARD_RETRY_COUNT = 7
EASY_RETRY_COUNT = 5

# every worked binary operation appearing in the two solution texts
MOD_GOLDENS = [
    (17, "+", 13, 7),
    (13, "+", 7, 20),
    (12, "+", 20, 9),
    (9, "+", 13, 22),
    (7, "*", 22, 16),
    (5, "+", 0, 5),
    (0, "-", 0, 0),
    (12, "*", 5, 14),
    (14, "+", 0, 14),
    (2, "+", 0, 2),
    (0, "+", 2, 2),
    (14, "-", 14, 0),
    (13, "+", 0, 13),
    (2, "-", 0, 2),
    (0, "+", 13, 13),
    (2, "+", 2, 4),
    (4, "+", 13, 17),
    (13, "*", 17, 14),
]
