import pytest
from multiprocessing import cpu_count
from numpy import array, array_equal

from causalpatterns.base import DegenerateData, TooShort
from causalpatterns.utility import thread_count, read_series_csv, write_table, THREADS_ENV


class TestThreadCount:
    def test_default(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)

        assert thread_count() == cpu_count()
        assert thread_count(1) == 1

    def test_environment_cap(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, '1')

        assert thread_count() == 1
        assert thread_count(8) == 1

    @pytest.mark.parametrize('requested', (0, -3))
    def test_at_least_one(self, requested, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)

        assert thread_count(requested) == 1

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, 'many')

        with pytest.raises(ValueError):
            thread_count()


class TestReadSeriesCsv:
    def test_columns(self, tmp_path):
        path = tmp_path / 'series.csv'
        path.write_text('a,b,c\n1,2,3\n4,5,6\n')

        assert array_equal(read_series_csv(str(path), ['c', 'a']), array([[3.0, 1.0], [6.0, 4.0]]))
        assert read_series_csv(str(path)).shape == (2, 3)

    def test_missing_value_lines(self, tmp_path):
        path = tmp_path / 'series.csv'
        path.write_text('a,b\n1,2\n3,\n5,6\n,8\n')

        with pytest.raises(DegenerateData, match=r'\[3, 5\]'):
            read_series_csv(str(path))

    def test_non_numeric(self, tmp_path):
        path = tmp_path / 'series.csv'
        path.write_text('a,b\n1,2\n3,four\n')

        with pytest.raises(DegenerateData):
            read_series_csv(str(path))

    def test_missing_column(self, tmp_path):
        path = tmp_path / 'series.csv'
        path.write_text('a,b\n1,2\n')

        with pytest.raises(ValueError, match='not found'):
            read_series_csv(str(path), ['z'])

    def test_no_rows(self, tmp_path):
        path = tmp_path / 'series.csv'
        path.write_text('a,b\n')

        with pytest.raises(TooShort):
            read_series_csv(str(path))


def test_write_table_precision(tmp_path):
    path = tmp_path / 'table.csv'
    write_table(str(path), {'t': [0, 1], 'value': [0.1, 1 / 3]})
    lines = path.read_text().splitlines()

    assert lines[0] == 't,value'
    assert lines[1] == '0,0.10000000000000001'
    assert lines[2] == '1,0.33333333333333331'
