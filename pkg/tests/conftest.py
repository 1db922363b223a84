import numpy as np
import pytest

import bmameta as bm
from bmameta.data import CovariateKind, Measure, bundled_dataset_path, load_csv
from bmameta.inference import McmcSettings
from bmameta.likelihood import LikelihoodContext


@pytest.fixture(scope="session")
def cohen_dataset():
    """Fisher's z dataset built from the bundled correlation fixture."""
    import csv

    records = []
    with open(bundled_dataset_path("cohen1981"), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            z, se = bm.fishers_z(float(row["r"]), int(row["n"]))
            records.append(bm.StudyRecord(row["study"], z, se))
    return bm.Dataset(records=tuple(records), measure=Measure.FISHERS_Z)


@pytest.fixture(scope="session")
def hasselblad_dataset():
    import csv

    records = []
    with open(bundled_dataset_path("hasselblad1992"), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            logor, se = bm.logor_from_ci(
                float(row["or"]), float(row["ci_lower"]), float(row["ci_upper"]), 0.95
            )
            records.append(
                bm.StudyRecord(
                    row["study"], logor, se,
                    covariates={k: row[k] for k in ("smoke", "no2", "gender")},
                )
            )
    kinds = {k: CovariateKind.CATEGORICAL for k in ("smoke", "no2", "gender")}
    return bm.Dataset(records=tuple(records), measure=Measure.LOGOR, covariate_kinds=kinds)


@pytest.fixture(scope="session")
def konstantopoulos_dataset():
    return load_csv(
        bundled_dataset_path("konstantopoulos2011"),
        {"effect": "yi", "se": "se", "cluster": "district", "label": "school"},
        Measure.SMD,
    )


@pytest.fixture(scope="session")
def fast_settings():
    """Small but honest MCMC settings for unit tests."""
    return McmcSettings(chains=2, adaptation=300, burnin=300, sampling=1200, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def single_study_ctx():
    ds = bm.Dataset(records=(bm.StudyRecord("s1", 0.3, 0.1),))
    return LikelihoodContext(ds)
