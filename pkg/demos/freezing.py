"""Freezing a once-reinforced walk on the triangle.  With a tiny initial
conductance every fresh edge moves the resistance budget by about 50, so the
freeze time is the step at which the second fresh edge is crossed.  The law
of that time is geometric with ratio 2/3, and the frozen process agrees with
the path law of the original walk up to the freeze."""
from rwce import triangle
from rwce.checks import frozen_fixture
from rwce.walker import frozen_law, frozen_process_check

_, env, rule = frozen_fixture()
_, gamma_law, _ = frozen_law(triangle(), env, rule, 6)
for k in sorted(gamma_law, key=lambda x: (x is None, x)):
    print(f"P(gamma = {k}) = {gamma_law[k]:.6f}")
chk = frozen_process_check(triangle(), env, rule, 6)
print("frozen process matches original law:", chk.passed)
