import json
import os
import tempfile
import unittest

from sfmpy.harness_cli.verification import VERIFICATION_SUITES, CHECKS, VerificationFailure, run_suite, run_check, write_report, \
    raise_on_failure, monte_carlo_slope, check_sf_td7_vs_oracle, check_sf_td_stochastic_vs_oracle


class SuiteTests(unittest.TestCase):

    def _assert_suite_passes(self, suite):
        results = run_suite(suite, progress=False)
        self.assertEqual([r.name for r in results], VERIFICATION_SUITES[suite])
        for r in results:
            assert r.passed, f'{r.name}: {r.max_error} > {r.tolerance}'
        raise_on_failure(results)

    def test_lemma1(self):
        self._assert_suite_passes('lemma1')

    def test_prop1(self):
        self._assert_suite_passes('prop1')

    def test_prop2(self):
        self._assert_suite_passes('prop2')

    def test_sf_oracle(self):
        self._assert_suite_passes('sf_oracle')

    def test_every_check_in_one_suite(self):
        listed = [name for names in VERIFICATION_SUITES.values() for name in names]
        self.assertEqual(sorted(listed), sorted(CHECKS))
        self.assertEqual(len(listed), len(set(listed)))


class FailurePathTests(unittest.TestCase):

    def test_corrupted_check_named(self):
        results = run_suite('lemma1', corrupt_check='q_factorization', progress=False)
        failed = [r.name for r in results if not r.passed]
        self.assertEqual(failed, ['q_factorization'])
        with self.assertRaises(VerificationFailure) as context:
            raise_on_failure(results)
        self.assertIn('q_factorization', str(context.exception))

    def test_zero_tolerance_check_corrupted(self):
        result = run_check('lemma1', 'rollout_determinism', corrupt_check='rollout_determinism')
        assert not result.passed
        self.assertGreater(result.max_error, 0)

    def test_unknown_names(self):
        with self.assertRaises(ValueError):
            run_suite('lemma2', progress=False)
        with self.assertRaises(ValueError):
            run_suite('lemma1', corrupt_check='no_such_check', progress=False)

    def test_report(self):
        results = run_suite('lemma1', corrupt_check='lemma1_identity', progress=False)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'reports', 'verify.json')
            write_report(results, path)
            with open(path) as f:
                report = json.load(f)
        self.assertFalse(report['passed'])
        self.assertEqual(report['failed_checks'], ['lemma1_identity'])
        self.assertEqual([c['name'] for c in report['checks']], VERIFICATION_SUITES['lemma1'])
        for check in report['checks']:
            self.assertEqual(set(check), {'suite', 'name', 'max_error', 'tolerance', 'passed', 'instances', 'seconds'})


class TabularTdTests(unittest.TestCase):

    def test_both_target_modes_checked(self):
        for name in ['sf_td_vs_oracle', 'sf_td7_vs_oracle', 'sf_td_stochastic_vs_oracle']:
            self.assertIn(name, VERIFICATION_SUITES['sf_oracle'])

    def test_td7_deterministic(self):
        error, updates = check_sf_td7_vs_oracle()
        self.assertEqual(updates, 20000)
        self.assertLess(error, CHECKS['sf_td7_vs_oracle'][1])

    def test_td7_stochastic_at_training_discount(self):
        error, _ = check_sf_td_stochastic_vs_oracle()
        self.assertLess(error, CHECKS['sf_td_stochastic_vs_oracle'][1])


class MonteCarloTests(unittest.TestCase):

    def test_slope_near_minus_half(self):
        slope = monte_carlo_slope(sizes=(100, 400, 1600, 6400), repeats=40, seed=21)
        self.assertAlmostEqual(slope, -0.5, delta=0.15)


if __name__ == '__main__':
    unittest.main()
