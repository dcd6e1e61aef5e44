"""Green-function diagnostics for the q-walk in a few dimensions.

Prints G(o), the sups of G^{*i} and whether each converged, then the
contraction constant alpha for a couple of delta values.
"""
from rwpre.green import check_A3, deterministic_q, green_table, uniform_q


def show(name, q, d1, **kw):
    t = green_table(q, d1, **kw)
    print(f"{name}: G(o)={t.G_origin:.6f}")
    for i in (1, 2, 3, 4):
        print(f"  i={i} sup={t.sup_estimates[i]:.6g} tail exponent={t.tail_exponent[i]:.2f} "
              f"converged={t.converged[i]}")
    print("  A3 ok:", check_A3(q, d1, table=t).ok)
    return t


def main():
    show("deterministic", deterministic_q(), 1, K=200)
    t5 = show("uniform d1=5", uniform_q(5), 5, K=300)
    show("uniform d1=9", uniform_q(9), 9, K=200, box_radius=2)
    for delta in (0.9, 0.99):
        print(f"alpha(delta={delta}) for d1=5: {t5.alpha(delta):.5f}")


if __name__ == "__main__":
    main()
