from django.urls import path
from . import views

app_name = 'benchmarks'

urlpatterns = [
    path('', views.run_list, name='run_list'),
    path('<str:run_id>/', views.run_detail, name='run_detail'),
]
