import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import LinearRegression

from splam import SPLAMClassifier, SPLAMPath, SPLAMRegressor, SplineBasis
from splam.experiments import gen_synth1
from splam.path import THEORY_ALPHA


@pytest.fixture(scope="module")
def data():
    d = gen_synth1(400, 0.5, seed=0, p=12)
    return d.X, d.y


class TestSplineBasis:
    def test_fit_transform(self, data):
        X, _ = data
        sb = SplineBasis(n_knots=5)
        Q = sb.fit_transform(X)
        assert Q.shape == (400, 12 * 8)
        np.testing.assert_allclose(sb.transform(X), Q, atol=1e-9)

    def test_in_pipeline(self, data):
        X, y = data
        pipe = make_pipeline(SplineBasis(), LinearRegression()).fit(X, y)
        assert pipe.score(X, y) > 0.95

    def test_params(self):
        sb = SplineBasis(n_knots=3, linear_only=True)
        assert sb.get_params() == {"n_knots": 3, "linear_only": True}
        assert clone(sb).get_params() == sb.get_params()


class TestRegressor:
    def test_defaults(self):
        params = SPLAMRegressor().get_params()
        assert params["alpha"] == THEORY_ALPHA and params["lam"] is None

    def test_fit_predict(self, data):
        X, y = data
        est = SPLAMRegressor(lam=0.02, alpha=0.5).fit(X, y)
        np.testing.assert_allclose(est.predict(X), est.result_.predict(est.design_.Q),
                                   atol=1e-10)
        assert est.score(X, y) > 0.9
        assert est.status_[:3] == ["nonlinear"] * 3

    def test_lambda_max_gives_constant(self, data):
        X, y = data
        est = SPLAMRegressor(lam="max").fit(X, y)
        assert not np.any(est.coef_)
        np.testing.assert_allclose(est.predict(X[:5]), y.mean())

    def test_bad_lambda(self, data):
        X, y = data
        with pytest.raises(ValueError, match="'max'"):
            SPLAMRegressor(lam="huge").fit(X, y)

    def test_clone_and_set_params(self):
        est = SPLAMRegressor(lam=0.1).set_params(alpha=0.3, solver="fista")
        c = clone(est)
        assert c.get_params()["alpha"] == 0.3 and c.get_params()["solver"] == "fista"

    def test_unfitted(self, data):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            SPLAMRegressor().predict(data[0])


class TestClassifier:
    def test_labels_roundtrip(self, data):
        X, y = data
        labels = np.where(y > np.median(y), "hi", "lo")
        clf = SPLAMClassifier(lam=0.005, alpha=0.5).fit(X, labels)
        assert list(clf.classes_) == ["hi", "lo"]
        assert set(clf.predict(X)) <= {"hi", "lo"}
        proba = clf.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        assert clf.score(X, labels) > 0.8
        # classes_[1] is the positive class
        assert np.array_equal(clf.predict(X) == "lo", proba[:, 1] >= 0.5)

    def test_rejects_multiclass(self, data):
        X, _ = data
        with pytest.raises(ValueError, match="two classes"):
            SPLAMClassifier().fit(X[:30], np.arange(30) % 3)


class TestPath:
    def test_selection(self, data):
        X, y = data
        est = SPLAMPath(alphas=(0.5, 1.0), n_lambda=20).fit(X, y)
        assert est.alpha_ in (0.5, 1.0)
        a, l = est.grid_.selected
        assert est.lam_ == est.grid_.paths[a].lambdas[l]
        assert est.predict(X).shape == (400,)

    def test_explicit_validation(self, data):
        X, y = data
        est = SPLAMPath(alphas=(0.5,), n_lambda=10).fit(X[:300], y[:300], X[300:], y[300:])
        assert est.design_.n_samples == 300

    def test_logistic(self, data):
        X, y = data
        lab = (y > np.median(y)).astype(int)
        est = SPLAMPath(loss="logistic", alphas=(0.5,), n_lambda=10).fit(X, lab)
        assert set(est.predict(X)) <= {0, 1}
        assert est.to_bundle().labels == [0, 1]

    def test_bundle(self, data):
        X, y = data
        est = SPLAMPath(alphas=(1.0,), n_lambda=10).fit(X, y)
        b = est.to_bundle()
        np.testing.assert_array_equal(b.predict(X), est.predict(X))
