"""Regenerates data/sociopatterns_synthetic.tsv, a small synthetic contact
list in the sociopatterns primary-school layout: t, i, j, class_i, class_j."""
import random

random.seed(2011)
class_a = [1400 + k for k in range(25)]
class_b = [1500 + k for k in range(10)]
groups = {**{n: "1A" for n in class_a}, **{n: "1B" for n in class_b}}
nodes = class_a + class_b
lines = []
t0 = 31220
for step in range(360):
    t = t0 + 20 * step
    for _ in range(random.randint(3, 12)):
        a = random.choice(nodes)
        pool = [n for n in nodes if groups[n] == groups[a]] if random.random() < 0.85 else nodes
        b = random.choice(pool)
        if a == b:
            continue
        lines.append(f"{t}\t{a}\t{b}\t{groups[a]}\t{groups[b]}")
# One self-tie, which the parser must skip.
lines.insert(100, f"{t0 + 2000}\t1403\t1403\t1A\t1A")
with open("data/sociopatterns_synthetic.tsv", "w") as f:
    f.write("\n".join(lines) + "\n")
