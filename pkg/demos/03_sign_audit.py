"""Which sign is right?

Several evolution formulas circulate with sign choices that disagree.  This
script evaluates every candidate on random flows: three families per curve
kind, each on three grids that halve du and dt.  A candidate that is correct
has a residual that falls at the rate of the discretisation.  A wrong one
stalls at a fixed size.  Exactly one candidate per formula survives.
"""

from nullflow.verify import audit_table, sign_audit

audit = sign_audit(seed=0, runs=3, levels=3)
print(audit_table(audit))
print()
for entry in audit["identities"]:
    verdict = "agrees" if entry["stated_wins"] else "is wrong"
    print(f"{entry['name']:16s} winner {entry['winner']:18s} stated form {verdict}")
